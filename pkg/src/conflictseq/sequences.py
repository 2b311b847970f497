"""Per-cell state sequences, pooled transition rates, and substitution costs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

import numpy as np

from .grid import CellId
from .scdi import N_STATES, STATE_NAMES, State, StateField


@dataclass(frozen=True)
class StateSequence:
    cell: CellId
    symbols: tuple[State, ...]

    def codes(self) -> np.ndarray:
        return np.array([s.value for s in self.symbols], dtype=np.uint8)

    def __str__(self) -> str:
        return "-".join(s.name for s in self.symbols)


@dataclass
class SequenceSet:
    sequences: list[StateSequence]
    t: int
    includes_all_nc: bool

    def __post_init__(self) -> None:
        cells = [s.cell for s in self.sequences]
        if len(set(cells)) != len(cells):
            raise ValueError("duplicate cells in sequence set")
        for s in self.sequences:
            if len(s.symbols) != self.t:
                raise ValueError("all sequences must share the same length")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def cells(self) -> list[CellId]:
        return [s.cell for s in self.sequences]

    def code_matrix(self) -> np.ndarray:
        """(n, T) uint8 matrix of state codes, sequence order preserved."""
        out = np.empty((len(self.sequences), self.t), dtype=np.uint8)
        for i, s in enumerate(self.sequences):
            out[i, :] = s.codes()
        return out


def extract_sequences(field_: StateField, drop_never_violent: bool = True) -> SequenceSet:
    """One state sequence per grid cell, row-major cell order.

    With ``drop_never_violent`` the all-NC cells are excluded; they form the
    implied never-conflict class reported separately downstream.
    """
    seqs: list[StateSequence] = []
    for cell in field_.grid.all_cells():
        row = field_.cell_codes(cell)
        if drop_never_violent and not row.any():
            continue
        seqs.append(StateSequence(cell, tuple(State(int(c)) for c in row)))
    return SequenceSet(seqs, t=field_.n_years, includes_all_nc=not drop_never_violent)


@dataclass
class TransitionMatrix:
    """Adjacent-pair transition counts and row-conditional probabilities.

    counts[i, j] = number of observed (state i at t, state j at t+1) pairs;
    probs rows are counts normalized by their row sum, all-zero where a
    state never occurs as a source.
    """

    counts: np.ndarray
    probs: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_STATES, N_STATES) or (counts < 0).any():
            raise ValueError("counts must be a nonnegative 5x5 matrix")
        self.counts = counts
        totals = counts.sum(axis=1)
        probs = np.zeros((N_STATES, N_STATES), dtype=float)
        supported = totals > 0
        probs[supported] = counts[supported] / totals[supported, None]
        self.probs = probs

    def p(self, src: State, dst: State) -> float:
        return float(self.probs[src.value, dst.value])


def count_transitions(code_rows: Iterable[np.ndarray]) -> np.ndarray:
    counts = np.zeros((N_STATES, N_STATES), dtype=np.int64)
    for codes in code_rows:
        np.add.at(counts, (codes[:-1].astype(np.intp), codes[1:].astype(np.intp)), 1)
    return counts


def empirical_transition_matrix(seqs: SequenceSet) -> TransitionMatrix:
    """Pool adjacent-pair counts over every sequence in the set."""
    if seqs.t < 2:
        raise ValueError("sequences must have length >= 2")
    return TransitionMatrix(count_transitions(s.codes() for s in seqs.sequences))


@dataclass
class CostMatrix:
    """Symmetric substitution costs over the state alphabet plus an indel cost.

    The diagonal is 0 so matching identical symbols is free. Transition-
    derived costs (substitution_costs) additionally stay within [0, 2];
    hand-picked matrices may use any nonnegative scale.
    """

    sub: np.ndarray
    indel: float

    def __post_init__(self) -> None:
        sub = np.asarray(self.sub, dtype=float)
        if sub.shape != (N_STATES, N_STATES):
            raise ValueError("sub must be 5x5")
        if not np.allclose(sub, sub.T, atol=1e-12):
            raise ValueError("sub must be symmetric")
        if np.diag(sub).any():
            raise ValueError("sub diagonal must be zero")
        if (sub < 0).any():
            raise ValueError("sub costs must be nonnegative")
        if self.indel <= 0:
            raise ValueError("indel must be > 0")
        self.sub = sub
        self.indel = float(self.indel)


def substitution_costs(tm: TransitionMatrix, indel: Optional[float] = None) -> CostMatrix:
    """Empirical substitution costs: 2 minus the mutual transition rates.

    For i != j the cost is 2 - Pr(j at t+1 | i at t) - Pr(i at t+1 | j at t),
    so states that often transition into one another are cheap to swap. The
    diagonal is forced to 0 (matching is free). The default indel cost is
    half the maximum off-diagonal substitution cost, the conventional low
    setting that favors motif alignment over calendar alignment.
    """
    mutual = tm.probs + tm.probs.T  # commutative, hence exactly symmetric
    sub = 2.0 - mutual
    np.fill_diagonal(sub, 0.0)
    sub = np.clip(sub, 0.0, 2.0)
    if indel is None:
        off = sub[~np.eye(N_STATES, dtype=bool)]
        peak = float(off.max()) if off.size else 2.0
        if peak <= 0:
            peak = 2.0
        indel = 0.5 * peak
    return CostMatrix(sub=sub, indel=float(indel))


def uniform_costs(sub: float = 1.0, indel: float = 1.0) -> CostMatrix:
    mat = np.full((N_STATES, N_STATES), float(sub))
    np.fill_diagonal(mat, 0.0)
    return CostMatrix(sub=mat, indel=indel)


def write_sequences_csv(seqs: SequenceSet, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["cell_col", "cell_row", "sequence"])
    for s in seqs.sequences:
        writer.writerow([s.cell.col, s.cell.row, str(s)])


def read_sequences_csv(stream: IO[str], includes_all_nc: bool = False) -> SequenceSet:
    reader = csv.DictReader(stream)
    seqs = []
    t = None
    for row in reader:
        symbols = tuple(State[name] for name in row["sequence"].split("-"))
        t = len(symbols) if t is None else t
        seqs.append(StateSequence(CellId(int(row["cell_col"]), int(row["cell_row"])), symbols))
    if t is None:
        raise ValueError("no sequences in input")
    return SequenceSet(seqs, t=t, includes_all_nc=includes_all_nc)


def write_matrix_csv(matrix: np.ndarray, stream: IO[str], fmt: str = "%.17g") -> None:
    """5x5 matrix with state labels on both axes."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["state"] + list(STATE_NAMES))
    for i, name in enumerate(STATE_NAMES):
        writer.writerow([name] + [fmt % v for v in matrix[i]])


def write_transition_matrix_csv(tm: TransitionMatrix, stream: IO[str]) -> None:
    stream.write("# transition counts\n")
    write_matrix_csv(tm.counts, stream, fmt="%d")
    stream.write("# transition probabilities p(col | row)\n")
    write_matrix_csv(tm.probs, stream)


def write_cost_matrix_csv(costs: CostMatrix, stream: IO[str]) -> None:
    stream.write(f"# indel,{costs.indel!r}\n")
    write_matrix_csv(costs.sub, stream)


def read_cost_matrix_csv(stream: IO[str]) -> CostMatrix:
    first = stream.readline()
    if not first.startswith("# indel,"):
        raise ValueError("missing indel header")
    indel = float(first.split(",", 1)[1])
    reader = csv.reader(stream)
    header = next(reader)
    if header[1:] != list(STATE_NAMES):
        raise ValueError("unexpected state labels in cost matrix")
    sub = np.zeros((N_STATES, N_STATES))
    for i, row in zip(range(N_STATES), reader):
        sub[i, :] = [float(v) for v in row[1:]]
    return CostMatrix(sub=sub, indel=indel)
