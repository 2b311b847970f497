"""Per-cluster Markov statistics: transition matrices, hitting times, and
trajectory summaries (the per-type descriptive table)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Optional

import numpy as np

from .cluster import ClusterAssignment
from .scdi import N_STATES, State, VIOLENT_STATES
from .sequences import (
    SequenceSet,
    StateSequence,
    TransitionMatrix,
    count_transitions,
)


def cluster_sequences(seqs: SequenceSet, assign: ClusterAssignment, cluster: int) -> list[StateSequence]:
    mapping = assign.mapping()
    members = [s for s in seqs.sequences if mapping.get(s.cell) == cluster]
    if not members:
        raise ValueError(f"cluster {cluster} is empty")
    return members


def cluster_transition_matrix(
    seqs: SequenceSet, assign: ClusterAssignment, cluster: int
) -> TransitionMatrix:
    """Pooled transition counts restricted to the cluster's sequences."""
    members = cluster_sequences(seqs, assign, cluster)
    return TransitionMatrix(count_transitions(s.codes() for s in members))


@dataclass
class HittingTimes:
    """Expected years from each violent state to the first NC year.

    ``h[state]`` is +inf exactly when the chain, started there, fails to
    reach NC almost surely (NC unreachable, or reachable only alongside a
    positive-probability escape into a violent class that never returns).
    """

    h: dict[State, float]


def hitting_times(tm: TransitionMatrix) -> HittingTimes:
    """Solve h_i = 1 + sum_j p(j|i) h_j over violent states j.

    The linear system is restricted to violent states from which NC is
    reached almost surely; everything else is +inf.
    """
    P = tm.probs
    # states i from which NC is reachable through positive-probability steps
    reaches_nc = {State.NC.value}
    changed = True
    while changed:
        changed = False
        for i in range(N_STATES):
            if i not in reaches_nc and any(P[i, j] > 0 for j in reaches_nc):
                reaches_nc.add(i)
                changed = True

    violent = [s.value for s in VIOLENT_STATES]
    doomed = [i for i in violent if i not in reaches_nc]
    # states with positive-probability access to a doomed state are also
    # infinite in expectation
    tainted = set(doomed)
    changed = True
    while changed:
        changed = False
        for i in violent:
            if i not in tainted and any(P[i, j] > 0 for j in tainted):
                tainted.add(i)
                changed = True

    finite = [i for i in violent if i not in tainted]
    h = {State(i): math.inf for i in violent}
    if finite:
        idx = np.array(finite)
        Q = P[np.ix_(idx, idx)]
        A = np.eye(len(finite)) - Q
        b = np.ones(len(finite))
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise np.linalg.LinAlgError(
                f"hitting-time system is singular for states {[State(i).name for i in finite]}: {exc}"
            ) from exc
        residual = float(np.abs(A @ sol - b).max())
        if residual > 1e-6:  # pragma: no cover - defensive
            raise np.linalg.LinAlgError(f"hitting-time solve residual {residual:.3g} too large")
        for i, value in zip(finite, sol):
            h[State(i)] = float(value)
    return HittingTimes(h=h)


def _start_tally(members: Iterable[StateSequence], mode: str) -> dict[State, int]:
    if mode not in ("first_violent", "initial_state", "spell_starts"):
        raise ValueError(f"unknown mode {mode!r}")
    tally = {s: 0 for s in VIOLENT_STATES}
    for seq in members:
        codes = seq.codes()
        if mode == "initial_state":
            if codes[0] != State.NC.value:
                tally[State(int(codes[0]))] += 1
        elif mode == "first_violent":
            nz = np.nonzero(codes)[0]
            if nz.size:
                tally[State(int(codes[nz[0]]))] += 1
        else:
            prev = State.NC.value
            for c in codes:
                if c != State.NC.value and prev == State.NC.value:
                    tally[State(int(c))] += 1
                prev = int(c)
    return tally


def start_distribution(
    seqs: SequenceSet,
    assign: Optional[ClusterAssignment] = None,
    cluster: Optional[int] = None,
    mode: str = "first_violent",
) -> dict[State, float]:
    """Distribution of violent states at the start of the cluster's spells.

    Modes:
      - "first_violent" (default): the first violent symbol of each sequence
      - "initial_state": the t=0 symbol of sequences that start violent
      - "spell_starts": the first symbol of every violent spell
    """
    if assign is not None and cluster is not None:
        members = cluster_sequences(seqs, assign, cluster)
    else:
        members = seqs.sequences
    tally = _start_tally(members, mode)
    total = sum(tally.values())
    if total == 0:
        raise ValueError("no violent spell in the selected sequences")
    return {s: tally[s] / total for s in VIOLENT_STATES}


def mvst(tm: TransitionMatrix, start_dist: Mapping[State, float]) -> float:
    """Mean violence stopping time: start-weighted hitting times to NC.

    Returns +inf when any positively-weighted state has no finite stopping
    time under the chain.
    """
    weights = {s: float(start_dist.get(s, 0.0)) for s in VIOLENT_STATES}
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"start distribution must sum to 1 over violent states, got {total}")
    times = hitting_times(tm).h
    out = 0.0
    for s, w in weights.items():
        if w == 0.0:
            continue
        if math.isinf(times[s]):
            return math.inf
        out += w * times[s]
    return out


@dataclass
class TrajectorySummary:
    """One descriptive row per trajectory type.

    Percent conventions: ``start_share`` is the share of all NC-source
    transitions (NC->NC included in the denominator); the repetition, cross,
    and terminus probabilities are row-conditional p(dst | src).
    """

    cluster: object  # int cluster id or "all"
    n_cells: int
    start: Optional[tuple[State, float]]  # (X, share of NC->. going to X)
    repetition: Optional[tuple[State, float]]  # (X, p(X|X)), X violent
    cross: Optional[tuple[State, State, float]]  # (X, Y, p(Y|X)), X != Y violent
    terminus: Optional[tuple[State, float]]  # (X, p(NC|X)), X violent
    mvst_years: float


def _summarize(members: list[StateSequence], cluster_id, start_mode: str) -> TrajectorySummary:
    counts = count_transitions(s.codes() for s in members)
    tm = TransitionMatrix(counts)
    violent_idx = [s.value for s in VIOLENT_STATES]

    nc_row = counts[State.NC.value]
    nc_total = int(nc_row.sum())
    start = None
    if nc_total and nc_row[violent_idx].max() > 0:
        x = violent_idx[int(np.argmax(nc_row[violent_idx]))]
        start = (State(x), float(nc_row[x] / nc_total))

    repetition = None
    self_p = [(tm.probs[i, i], i) for i in violent_idx if counts[i].sum() > 0]
    if self_p:
        best = max(self_p, key=lambda t: (t[0], -t[1]))
        if best[0] > 0:
            repetition = (State(best[1]), float(best[0]))

    cross = None
    best_cross = (0.0, None, None)
    for i in violent_idx:
        if counts[i].sum() == 0:
            continue
        for j in violent_idx:
            if i != j and tm.probs[i, j] > best_cross[0]:
                best_cross = (float(tm.probs[i, j]), i, j)
    if best_cross[1] is not None:
        cross = (State(best_cross[1]), State(best_cross[2]), best_cross[0])

    terminus = None
    term_p = [(tm.probs[i, State.NC.value], i) for i in violent_idx if counts[i].sum() > 0]
    if term_p:
        best = max(term_p, key=lambda t: (t[0], -t[1]))
        if best[0] > 0:
            terminus = (State(best[1]), float(best[0]))

    tally = _start_tally(members, start_mode)
    total = sum(tally.values())
    if total:
        dist = {s: tally[s] / total for s in VIOLENT_STATES}
        stopping = mvst(tm, dist)
    else:
        stopping = math.nan

    return TrajectorySummary(
        cluster=cluster_id,
        n_cells=len(members),
        start=start,
        repetition=repetition,
        cross=cross,
        terminus=terminus,
        mvst_years=stopping,
    )


def trajectory_summary(
    seqs: SequenceSet,
    assign: ClusterAssignment,
    cluster: int,
    start_mode: str = "first_violent",
) -> TrajectorySummary:
    return _summarize(cluster_sequences(seqs, assign, cluster), cluster, start_mode)


def summary_table(
    seqs: SequenceSet, assign: ClusterAssignment, start_mode: str = "first_violent"
) -> list[TrajectorySummary]:
    """The all-cells row followed by one row per cluster id."""
    rows = [_summarize(list(seqs.sequences), "all", start_mode)]
    for c in range(1, assign.k + 1):
        rows.append(trajectory_summary(seqs, assign, c, start_mode))
    return rows


def write_summary_csv(rows: Iterable[TrajectorySummary], stream: IO[str]) -> None:
    stream.write("# start_share = count(NC->X) / count(NC->*), NC->NC included in the denominator\n")
    stream.write("# repetition_prob = p(X|X); cross_prob = p(Y|X); terminus_prob = p(NC|X); all row-conditional\n")
    stream.write("# mvst_years = hitting times to NC weighted by the first-violent-state distribution; inf when no finite stopping time exists\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(
        [
            "cluster",
            "n_cells",
            "start",
            "start_share",
            "repetition",
            "repetition_prob",
            "cross",
            "cross_prob",
            "terminus",
            "terminus_prob",
            "mvst_years",
        ]
    )
    def cols(pair_text, prob):
        return [pair_text, "NA" if prob is None else repr(float(prob))]

    for row in rows:
        out = [row.cluster, row.n_cells]
        out += cols("NA" if row.start is None else f"NC>{row.start[0].name}",
                    None if row.start is None else row.start[1])
        out += cols("NA" if row.repetition is None else f"{row.repetition[0].name}>{row.repetition[0].name}",
                    None if row.repetition is None else row.repetition[1])
        out += cols("NA" if row.cross is None else f"{row.cross[0].name}>{row.cross[1].name}",
                    None if row.cross is None else row.cross[2])
        out += cols("NA" if row.terminus is None else f"{row.terminus[0].name}>NC",
                    None if row.terminus is None else row.terminus[1])
        out.append("inf" if math.isinf(row.mvst_years) else repr(float(row.mvst_years)))
        writer.writerow(out)
