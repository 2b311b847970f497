"""Pipeline configuration: YAML schema, loading, and validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .grid import GridSpec
from .ingest import DEFAULT_COLUMNS, DEFAULT_FILTER, DEFAULT_SPAN, EVENT_TYPES

# 0.5-degree cells over a continental bounding box; a documented default
# choice, not a property of any dataset.
DEFAULT_GRID = dict(
    origin_x=-20.0, origin_y=-40.0, cell_size=0.5, n_cols=160, n_rows=160,
    coordinate_space="lon/lat degrees (not equal-area)",
)


class ConfigError(ValueError):
    """Raised with every validation failure collected, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(errors))


@dataclass
class PipelineConfig:
    """Everything one run needs; a single seed reproduces the whole study."""

    output_dir: str = "out"
    seed: int = 0
    workers: int = 0  # 0 = all available
    events_csv: Optional[str] = None
    columns: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    event_types: list = field(default_factory=lambda: sorted(DEFAULT_FILTER))
    span: tuple = DEFAULT_SPAN
    grid: GridSpec = field(default_factory=lambda: GridSpec(**DEFAULT_GRID))
    threshold_scope: str = "global"
    single_event_rule: str = "dispersed"
    drop_never_violent: bool = True
    indel: Optional[float] = None  # None = half the max substitution cost
    normalize_distances: bool = False
    k: int = 6
    scheme: str = "queen"
    permutations: int = 999
    scenario: Optional[dict] = None  # raw mapping, parsed by the synth stage
    raw: dict = field(default_factory=dict)

    def validate(self, stage: Optional[str] = None) -> list[str]:
        """Collect every problem; empty list means the config is usable."""
        errors = []
        if self.k < 1:
            errors.append(f"k must be >= 1, got {self.k}")
        if self.span[0] > self.span[1]:
            errors.append(f"span start {self.span[0]} after end {self.span[1]}")
        if self.span[1] - self.span[0] < 1:
            errors.append("span must cover at least 2 years to form sequences")
        if self.scheme not in ("rook", "queen"):
            errors.append(f"scheme must be rook or queen, got {self.scheme!r}")
        if self.threshold_scope not in ("global", "per_year"):
            errors.append(f"threshold_scope must be global or per_year, got {self.threshold_scope!r}")
        if self.single_event_rule not in ("dispersed", "clustered"):
            errors.append(f"single_event_rule must be dispersed or clustered, got {self.single_event_rule!r}")
        if self.indel is not None and self.indel <= 0:
            errors.append(f"indel must be > 0, got {self.indel}")
        if self.permutations and self.permutations < 99:
            errors.append(f"permutations must be 0 (off) or >= 99, got {self.permutations}")
        if self.workers < 0:
            errors.append(f"workers must be >= 0, got {self.workers}")
        unknown = [t for t in self.event_types if t not in EVENT_TYPES]
        if unknown:
            errors.append(f"unknown event types {unknown}; expected from {list(EVENT_TYPES)}")
        if not self.event_types:
            errors.append("event_types must be non-empty")
        if stage == "ingest":
            if not self.events_csv:
                errors.append("ingest requires input.events_csv")
            elif not Path(self.events_csv).exists():
                errors.append(f"input.events_csv not found: {self.events_csv}")
        if stage == "synth" and self.scenario is None:
            errors.append("synth requires a scenario section")
        return errors

    def canonical(self) -> dict:
        g = self.grid
        return {
            "seed": self.seed,
            "events_csv": self.events_csv,
            "columns": dict(sorted(self.columns.items())),
            "event_types": sorted(self.event_types),
            "span": list(self.span),
            "grid": {
                "origin_x": g.origin_x,
                "origin_y": g.origin_y,
                "cell_size": g.cell_size,
                "n_cols": g.n_cols,
                "n_rows": g.n_rows,
            },
            "threshold_scope": self.threshold_scope,
            "single_event_rule": self.single_event_rule,
            "drop_never_violent": self.drop_never_violent,
            "indel": self.indel,
            "normalize_distances": self.normalize_distances,
            "k": self.k,
            "scheme": self.scheme,
            "permutations": self.permutations,
            "scenario": self.scenario,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    cfg = PipelineConfig(raw=dict(data))
    cfg.output_dir = str(data.get("output_dir", cfg.output_dir))
    cfg.seed = int(data.get("seed", cfg.seed))
    cfg.workers = int(data.get("workers", cfg.workers))

    inp = data.get("input", {})
    if "events_csv" in inp:
        cfg.events_csv = str(inp["events_csv"])
    if "columns" in inp:
        cfg.columns.update(inp["columns"])

    flt = data.get("filter", {})
    if "event_types" in flt:
        cfg.event_types = list(flt["event_types"])

    if "span" in data:
        span = data["span"]
        if isinstance(span, Mapping):
            cfg.span = (int(span["year_min"]), int(span["year_max"]))
        else:
            cfg.span = (int(span[0]), int(span[1]))

    if "grid" in data:
        g = dict(DEFAULT_GRID)
        g.update(data["grid"])
        cfg.grid = GridSpec(
            origin_x=float(g["origin_x"]),
            origin_y=float(g["origin_y"]),
            cell_size=float(g["cell_size"]),
            n_cols=int(g["n_cols"]),
            n_rows=int(g["n_rows"]),
            coordinate_space=str(g.get("coordinate_space", "unspecified")),
        )

    scdi = data.get("scdi", {})
    cfg.threshold_scope = str(scdi.get("threshold_scope", cfg.threshold_scope))
    cfg.single_event_rule = str(scdi.get("single_event_rule", cfg.single_event_rule))

    seqs = data.get("sequences", {})
    cfg.drop_never_violent = bool(seqs.get("drop_never_violent", cfg.drop_never_violent))

    costs = data.get("costs", {})
    if "indel" in costs and costs["indel"] not in (None, "half_max"):
        cfg.indel = float(costs["indel"])
    cfg.normalize_distances = bool(costs.get("normalize", cfg.normalize_distances))

    clus = data.get("cluster", {})
    cfg.k = int(clus.get("k", cfg.k))

    joins = data.get("joins", {})
    cfg.scheme = str(joins.get("scheme", cfg.scheme))
    cfg.permutations = int(joins.get("permutations", cfg.permutations))

    if "scenario" in data:
        # synthetic runs are self-contained: the scenario's grid and span
        # govern every stage of the run
        cfg.scenario = data["scenario"]
        if isinstance(cfg.scenario, Mapping):
            if "grid" in cfg.scenario:
                g = dict(DEFAULT_GRID)
                g.update(cfg.scenario["grid"])
                cfg.grid = GridSpec(
                    origin_x=float(g["origin_x"]),
                    origin_y=float(g["origin_y"]),
                    cell_size=float(g["cell_size"]),
                    n_cols=int(g["n_cols"]),
                    n_rows=int(g["n_rows"]),
                    coordinate_space=str(g.get("coordinate_space", "unspecified")),
                )
            if "span" in cfg.scenario:
                span = cfg.scenario["span"]
                cfg.span = (int(span[0]), int(span[1]))
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fp:
        data = yaml.safe_load(fp) or {}
    if not isinstance(data, Mapping):
        raise ConfigError([f"config root must be a mapping, got {type(data).__name__}"])
    return config_from_dict(data)
