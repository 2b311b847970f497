"""File-based pipeline stages with reproducibility manifests.

Each stage reads the previous stage's artifacts from the output directory,
writes its own plus a manifest (input hashes, config hash, seed, version),
and is individually re-runnable. Artifacts are byte-stable for a fixed
config and seed; timestamps live only in manifests.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from pathlib import Path
from typing import Optional

from . import __version__
from .chains import cluster_transition_matrix, summary_table, write_summary_csv
from .cluster import (
    assignment_geojson,
    cut,
    read_assignment_csv,
    to_newick,
    ward_linkage,
    write_assignment_csv,
    write_merges_csv,
)
from .config import ConfigError, PipelineConfig
from .ingest import parse_events, read_events_csv, write_events_csv, write_rejects_csv
from .om import DistanceMatrix, pairwise_distances
from .scdi import (
    build_state_field,
    read_state_field_csv,
    state_field_geojson,
    write_state_field_csv,
)
from .sequences import (
    empirical_transition_matrix,
    extract_sequences,
    read_cost_matrix_csv,
    read_sequences_csv,
    substitution_costs,
    write_cost_matrix_csv,
    write_sequences_csv,
    write_transition_matrix_csv,
)
from .spatial import (
    build_weights,
    join_counts,
    permutation_reference,
    write_joins_long_csv,
    write_zscore_matrix_csv,
)
from .synthetic import scenario_from_dict, simulate_scenario, write_truth_csv

STAGES = (
    "synth",
    "ingest",
    "classify",
    "sequences",
    "distances",
    "cluster",
    "stats",
    "joins",
    "report",
)


class MissingArtifactError(FileNotFoundError):
    def __init__(self, stage: str, path: Path, produced_by: str):
        self.stage = stage
        self.produced_by = produced_by
        super().__init__(
            f"stage '{stage}' requires {path.name}, produced by the '{produced_by}' stage; "
            f"run that stage first (looked in {path.parent})"
        )


def _require(stage: str, path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(stage, path, produced_by)
    return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: Path,
    stage: str,
    cfg: PipelineConfig,
    inputs: list[Path],
    outputs: list[Path],
    params: Optional[dict] = None,
) -> Path:
    manifest = {
        "stage": stage,
        "version": __version__,
        "created_utc": dt.datetime.now(dt.timezone.utc).isoformat(),
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "inputs": {p.name: _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "params": params or {},
    }
    path = out_dir / f"{stage}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _check(cfg: PipelineConfig, stage: str) -> Path:
    errors = cfg.validate(stage)
    if errors:
        raise ConfigError(errors)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_synth(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "synth")
    scenario = scenario_from_dict(cfg.scenario)
    result = simulate_scenario(scenario, cfg.seed)
    events_path = out / "events.csv"
    truth_path = out / "truth.csv"
    with open(events_path, "w", encoding="utf-8", newline="") as fp:
        write_events_csv(result.events, fp)
    with open(truth_path, "w", encoding="utf-8", newline="") as fp:
        write_truth_csv(result, scenario, fp)
    write_manifest(
        out, "synth", cfg, [], [events_path, truth_path],
        params={"n_events": len(result.events), "grid": scenario.grid.__dict__,
                "span": [scenario.year_min, scenario.year_max]},
    )
    return [events_path, truth_path]


def run_ingest(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "ingest")
    src = Path(cfg.events_csv)
    with open(src, "r", encoding="utf-8", newline="") as fp:
        events = parse_events(
            fp,
            grid=cfg.grid,
            event_filter=cfg.event_types,
            span=cfg.span,
            columns=cfg.columns,
        )
    events_path = out / "events.csv"
    rejects_path = out / "rejects.csv"
    with open(events_path, "w", encoding="utf-8", newline="") as fp:
        write_events_csv(events, fp)
    with open(rejects_path, "w", encoding="utf-8", newline="") as fp:
        write_rejects_csv(events, fp)
    write_manifest(
        out, "ingest", cfg, [src], [events_path, rejects_path],
        params={
            "n_input_rows": events.n_input_rows,
            "n_records": len(events),
            "n_rejects": len(events.rejects),
            "excluded": events.excluded,
        },
    )
    return [events_path, rejects_path]


def _load_events(cfg: PipelineConfig, stage: str):
    out = Path(cfg.output_dir)
    path = _require(stage, out / "events.csv", "ingest (or synth)")
    with open(path, "r", encoding="utf-8", newline="") as fp:
        return read_events_csv(fp, cfg.grid, cfg.span), path


def run_classify(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "classify")
    events, events_path = _load_events(cfg, "classify")
    field = build_state_field(
        events,
        threshold_scope=cfg.threshold_scope,
        single_event_rule=cfg.single_event_rule,
    )
    states_path = out / "states.csv"
    geo_path = out / "states.geojson"
    with open(states_path, "w", encoding="utf-8", newline="") as fp:
        write_state_field_csv(field, fp)
    geo_path.write_text(
        json.dumps(state_field_geojson(field), sort_keys=True) + "\n", encoding="utf-8"
    )
    write_manifest(
        out, "classify", cfg, [events_path], [states_path, geo_path],
        params={"threshold": field.threshold, "threshold_scope": cfg.threshold_scope},
    )
    return [states_path, geo_path]


def _load_field(cfg: PipelineConfig, stage: str):
    out = Path(cfg.output_dir)
    path = _require(stage, out / "states.csv", "classify")
    with open(path, "r", encoding="utf-8", newline="") as fp:
        field = read_state_field_csv(fp, cfg.grid, cfg.span[0], cfg.span[1], threshold=0.0)
    return field, path


def run_sequences(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "sequences")
    field, states_path = _load_field(cfg, "sequences")
    seqs = extract_sequences(field, drop_never_violent=cfg.drop_never_violent)
    if not len(seqs):
        raise ValueError("no sequences to analyze (all cells never violent?)")
    tm = empirical_transition_matrix(seqs)
    costs = substitution_costs(tm, indel=cfg.indel)
    seq_path = out / "sequences.csv"
    tm_path = out / "transition_matrix.csv"
    cost_path = out / "cost_matrix.csv"
    with open(seq_path, "w", encoding="utf-8", newline="") as fp:
        write_sequences_csv(seqs, fp)
    with open(tm_path, "w", encoding="utf-8", newline="") as fp:
        write_transition_matrix_csv(tm, fp)
    with open(cost_path, "w", encoding="utf-8", newline="") as fp:
        write_cost_matrix_csv(costs, fp)
    write_manifest(
        out, "sequences", cfg, [states_path], [seq_path, tm_path, cost_path],
        params={"n_sequences": len(seqs), "t": seqs.t, "indel": costs.indel,
                "drop_never_violent": cfg.drop_never_violent},
    )
    return [seq_path, tm_path, cost_path]


def _load_sequences(cfg: PipelineConfig, stage: str):
    out = Path(cfg.output_dir)
    path = _require(stage, out / "sequences.csv", "sequences")
    with open(path, "r", encoding="utf-8", newline="") as fp:
        return read_sequences_csv(fp, includes_all_nc=not cfg.drop_never_violent), path


def run_distances(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "distances")
    seqs, seq_path = _load_sequences(cfg, "distances")
    cost_path = _require("distances", out / "cost_matrix.csv", "sequences")
    with open(cost_path, "r", encoding="utf-8", newline="") as fp:
        costs = read_cost_matrix_csv(fp)
    dm = pairwise_distances(
        seqs, costs, workers=cfg.workers or None, normalize=cfg.normalize_distances
    )
    dist_path = out / "distances.omd"
    dm.save(dist_path)
    outputs = [dist_path]
    if dm.n <= 200:
        csv_path = out / "distances.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fp:
            dm.to_csv(fp)
        outputs.append(csv_path)
    write_manifest(
        out, "distances", cfg, [seq_path, cost_path], outputs,
        params={"n": dm.n, "pairs": int(dm.d.shape[0]), "normalize": cfg.normalize_distances},
    )
    return outputs


def run_cluster(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "cluster")
    dist_path = _require("cluster", out / "distances.omd", "distances")
    dm = DistanceMatrix.load(dist_path)
    dg = ward_linkage(dm)
    assign = cut(dg, min(cfg.k, dg.n_leaves))
    merges_path = out / "merges.csv"
    newick_path = out / "dendrogram.nwk"
    clusters_path = out / "clusters.csv"
    geo_path = out / "clusters.geojson"
    with open(merges_path, "w", encoding="utf-8", newline="") as fp:
        write_merges_csv(dg, fp)
    newick_path.write_text(to_newick(dg) + "\n", encoding="utf-8")
    with open(clusters_path, "w", encoding="utf-8", newline="") as fp:
        write_assignment_csv(assign, fp)
    geo_path.write_text(
        json.dumps(assignment_geojson(assign, cfg.grid), sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_manifest(
        out, "cluster", cfg, [dist_path],
        [merges_path, newick_path, clusters_path, geo_path],
        params={"k": assign.k, "sizes": assign.sizes()},
    )
    return [merges_path, newick_path, clusters_path, geo_path]


def _load_assignment(cfg: PipelineConfig, stage: str):
    out = Path(cfg.output_dir)
    path = _require(stage, out / "clusters.csv", "cluster")
    with open(path, "r", encoding="utf-8", newline="") as fp:
        return read_assignment_csv(fp), path


def run_stats(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "stats")
    seqs, seq_path = _load_sequences(cfg, "stats")
    assign, assign_path = _load_assignment(cfg, "stats")
    rows = summary_table(seqs, assign)
    summary_path = out / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fp:
        write_summary_csv(rows, fp)
    outputs = [summary_path]
    for c in range(1, assign.k + 1):
        tm_c = cluster_transition_matrix(seqs, assign, c)
        path = out / f"cluster_transitions_{c}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fp:
            write_transition_matrix_csv(tm_c, fp)
        outputs.append(path)
    write_manifest(out, "stats", cfg, [seq_path, assign_path], outputs,
                   params={"k": assign.k})
    return outputs


def run_joins(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "joins")
    assign, assign_path = _load_assignment(cfg, "joins")
    w = build_weights(assign.cells, scheme=cfg.scheme)
    report = join_counts(assign, w)
    perm = None
    if cfg.permutations:
        perm = permutation_reference(assign, w, cfg.permutations, cfg.seed)
    z_path = out / "joins_zscores.csv"
    long_path = out / "joins_long.csv"
    with open(z_path, "w", encoding="utf-8", newline="") as fp:
        write_zscore_matrix_csv(report, fp)
    with open(long_path, "w", encoding="utf-8", newline="") as fp:
        write_joins_long_csv(report, fp, perm)
    write_manifest(
        out, "joins", cfg, [assign_path], [z_path, long_path],
        params={"scheme": cfg.scheme, "permutations": cfg.permutations,
                "j_tot": report.j_tot, "n": report.n},
    )
    return [z_path, long_path]


def run_report(cfg: PipelineConfig) -> list[Path]:
    out = _check(cfg, "report")
    report_dir = out / "report"
    report_dir.mkdir(exist_ok=True)
    wanted = {
        "summary.csv": ("stats", "trajectory_summary.csv"),
        "transition_matrix.csv": ("sequences", "transition_rates_all.csv"),
        "joins_zscores.csv": ("joins", "joincount_zscores.csv"),
        "clusters.geojson": ("cluster", "trajectory_map.geojson"),
        "dendrogram.nwk": ("cluster", "dendrogram.nwk"),
    }
    copied = []
    index = {}
    for name, (producer, target_name) in wanted.items():
        src = _require("report", out / name, producer)
        target = report_dir / target_name
        target.write_bytes(src.read_bytes())
        copied.append(target)
        index[target_name] = _sha256(target)
    for src in sorted(out.glob("cluster_transitions_*.csv")):
        target = report_dir / src.name
        target.write_bytes(src.read_bytes())
        copied.append(target)
        index[src.name] = _sha256(target)
    index_path = report_dir / "report.json"
    index_path.write_text(
        json.dumps({"config_hash": cfg.config_hash(), "seed": cfg.seed, "files": index},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    copied.append(index_path)
    write_manifest(out, "report", cfg, [], copied, params={"n_files": len(copied)})
    return copied


_RUNNERS = {
    "synth": run_synth,
    "ingest": run_ingest,
    "classify": run_classify,
    "sequences": run_sequences,
    "distances": run_distances,
    "cluster": run_cluster,
    "stats": run_stats,
    "joins": run_joins,
    "report": run_report,
}


def run_stage(name: str, cfg: PipelineConfig) -> list[Path]:
    if name not in _RUNNERS:
        raise ValueError(f"unknown stage {name!r}; expected one of {', '.join(STAGES)}")
    return _RUNNERS[name](cfg)


def run_all(cfg: PipelineConfig, from_synthetic: bool = False) -> list[Path]:
    """Run every stage in order; equivalent artifact-for-artifact to running
    the stages one at a time."""
    order = ["synth" if from_synthetic else "ingest", "classify", "sequences",
             "distances", "cluster", "stats", "joins", "report"]
    produced: list[Path] = []
    for name in order:
        produced.extend(run_stage(name, cfg))
    return produced
