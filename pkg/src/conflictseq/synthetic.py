"""Deterministic synthetic event scenarios for dataset-free testing.

A scenario plants a Markov chain over the five states in each region of the
grid; every cell walks its region's chain across the span and emits a point
pattern per year matching the planted state's intensity and concentration
regime, so the classifier can recover the planted states.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from .grid import CellId, GridSpec
from .ingest import EventRecord, EventSet
from .scdi import N_STATES, STATE_NAMES, State

_VIOLENT_EVENT_TYPES = ("battle", "explosion_remote_violence", "violence_against_civilians")


@dataclass(frozen=True)
class Emission:
    """Per-state event-count and dispersion parameters.

    Counts are drawn uniformly from [count_min, count_max]. Clustered states
    scatter points in a sub-square whose side is ``spread`` of the cell;
    dispersed states jitter a regular lattice by ``spread`` of its spacing.
    """

    count_min: int
    count_max: int
    pattern: str  # "clustered" | "dispersed"
    spread: float = 0.2

    def __post_init__(self) -> None:
        if not (1 <= self.count_min <= self.count_max):
            raise ValueError("need 1 <= count_min <= count_max")
        if self.pattern not in ("clustered", "dispersed"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if not (0 < self.spread < 1):
            raise ValueError("spread must be in (0, 1)")


DEFAULT_EMISSIONS: dict[State, Emission] = {
    State.CL: Emission(2, 4, "clustered", 0.2),
    State.CH: Emission(9, 15, "clustered", 0.2),
    State.DL: Emission(2, 4, "dispersed", 0.3),
    State.DH: Emission(9, 15, "dispersed", 0.3),
}


@dataclass
class Region:
    name: str
    cells: list[CellId]
    chain: np.ndarray  # 5x5 row-stochastic over (NC, CL, CH, DL, DH)
    start: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0, 0]))

    def __post_init__(self) -> None:
        chain = np.asarray(self.chain, dtype=float)
        if chain.shape != (N_STATES, N_STATES) or (chain < 0).any():
            raise ValueError("chain must be a nonnegative 5x5 matrix")
        if not np.allclose(chain.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError(f"chain rows must sum to 1 in region {self.name!r}")
        start = np.asarray(self.start, dtype=float)
        if start.shape != (N_STATES,) or (start < 0).any() or abs(start.sum() - 1.0) > 1e-9:
            raise ValueError(f"start must be a distribution in region {self.name!r}")
        self.chain = chain
        self.start = start


@dataclass
class ScenarioConfig:
    grid: GridSpec
    year_min: int
    year_max: int
    regions: list[Region]
    emissions: Mapping[State, Emission] = field(default_factory=lambda: dict(DEFAULT_EMISSIONS))

    def __post_init__(self) -> None:
        seen: set[CellId] = set()
        for region in self.regions:
            for cell in region.cells:
                if cell in seen:
                    raise ValueError(f"cell {cell} assigned to more than one region")
                if not (0 <= cell.col < self.grid.n_cols and 0 <= cell.row < self.grid.n_rows):
                    raise ValueError(f"cell {cell} outside grid")
                seen.add(cell)
        if self.year_min > self.year_max:
            raise ValueError("year_min must not exceed year_max")


def _chain_from_mapping(spec: Mapping[str, Mapping[str, float]]) -> np.ndarray:
    chain = np.zeros((N_STATES, N_STATES))
    for src, row in spec.items():
        i = State[src].value
        for dst, p in row.items():
            chain[i, State[dst].value] = float(p)
    return chain


def _rect_cells(rect: Sequence[int]) -> list[CellId]:
    col0, row0, col1, row1 = rect
    return [CellId(c, r) for r in range(row0, row1 + 1) for c in range(col0, col1 + 1)]


def scenario_from_dict(spec: Mapping, grid: Optional[GridSpec] = None) -> ScenarioConfig:
    """Build a scenario from the config-file representation.

    Expected keys: ``grid`` (unless supplied), ``span`` ([year_min, year_max]),
    ``regions`` (each with ``name``, ``rect`` [col0, row0, col1, row1] or
    ``cells`` [[col, row], ...], ``chain`` as a sparse mapping of mappings,
    optional ``start``), optional per-state ``emissions`` overrides.
    """
    if grid is None:
        g = spec["grid"]
        grid = GridSpec(
            origin_x=float(g["origin_x"]),
            origin_y=float(g["origin_y"]),
            cell_size=float(g["cell_size"]),
            n_cols=int(g["n_cols"]),
            n_rows=int(g["n_rows"]),
            coordinate_space=str(g.get("coordinate_space", "unspecified")),
        )
    span = spec["span"]
    regions = []
    for reg in spec["regions"]:
        if "rect" in reg:
            cells = _rect_cells(reg["rect"])
        else:
            cells = [CellId(int(c), int(r)) for c, r in reg["cells"]]
        start = np.array([1.0, 0, 0, 0, 0])
        if "start" in reg:
            start = np.zeros(N_STATES)
            for name, p in reg["start"].items():
                start[State[name].value] = float(p)
        regions.append(
            Region(name=str(reg["name"]), cells=cells, chain=_chain_from_mapping(reg["chain"]), start=start)
        )
    emissions = dict(DEFAULT_EMISSIONS)
    for name, em in spec.get("emissions", {}).items():
        state = State[name]
        base = emissions[state]
        emissions[state] = Emission(
            count_min=int(em.get("count_min", base.count_min)),
            count_max=int(em.get("count_max", base.count_max)),
            pattern=str(em.get("pattern", base.pattern)),
            spread=float(em.get("spread", base.spread)),
        )
    return ScenarioConfig(
        grid=grid, year_min=int(span[0]), year_max=int(span[1]), regions=regions, emissions=emissions
    )


def _nc_unreachable_states(chain: np.ndarray) -> list[State]:
    """Violent states occurring in the chain from which NC cannot be reached."""
    reach_nc = {State.NC.value}
    changed = True
    while changed:
        changed = False
        for i in range(N_STATES):
            if i not in reach_nc and any(chain[i, j] > 0 for j in reach_nc):
                reach_nc.add(i)
                changed = True
    # only flag states that the chain can actually occupy
    occupied = {i for i in range(N_STATES) if chain[:, i].any() or chain[i].any()}
    return [State(i) for i in range(1, N_STATES) if i in occupied and i not in reach_nc]


@dataclass
class SyntheticResult:
    events: EventSet
    planted: np.ndarray  # (n_rows, n_cols, T) uint8 state codes, ground truth
    region_of: dict[CellId, str]


def simulate_scenario(scenario: ScenarioConfig, seed: int) -> SyntheticResult:
    """Run the scenario once; bit-reproducible for a fixed (scenario, seed)."""
    for region in scenario.regions:
        bad = _nc_unreachable_states(region.chain)
        if bad:
            warnings.warn(
                f"region {region.name!r}: NC unreachable from {[s.name for s in bad]}; "
                "downstream stopping times will be infinite",
                stacklevel=2,
            )

    rng = np.random.default_rng(seed)
    grid = scenario.grid
    t = scenario.year_max - scenario.year_min + 1
    planted = np.zeros((grid.n_rows, grid.n_cols, t), dtype=np.uint8)
    region_of: dict[CellId, str] = {}
    records: list[EventRecord] = []
    counter = 0

    for region in scenario.regions:
        cells = sorted(region.cells, key=lambda c: (c.row, c.col))
        for cell in cells:
            region_of[cell] = region.name
            state = int(rng.choice(N_STATES, p=region.start))
            for k, year in enumerate(range(scenario.year_min, scenario.year_max + 1)):
                if k > 0:
                    state = int(rng.choice(N_STATES, p=region.chain[state]))
                planted[cell.row, cell.col, k] = state
                if state == State.NC.value:
                    continue
                emission = scenario.emissions[State(state)]
                count = int(rng.integers(emission.count_min, emission.count_max + 1))
                xy = _emit_points(rng, grid, cell, emission, count)
                for px, py in xy:
                    day = int(rng.integers(0, 365))
                    etype = _VIOLENT_EVENT_TYPES[int(rng.integers(0, 3))]
                    records.append(
                        EventRecord(
                            id=f"s{counter:07d}",
                            date=dt.date(year, 1, 1) + dt.timedelta(days=day),
                            year=year,
                            lon=float(px),
                            lat=float(py),
                            event_type=etype,
                            cell=cell,
                        )
                    )
                    counter += 1

    events = EventSet(
        records=records,
        grid=grid,
        year_min=scenario.year_min,
        year_max=scenario.year_max,
        n_input_rows=len(records),
    )
    return SyntheticResult(events=events, planted=planted, region_of=region_of)


def _emit_points(
    rng: np.random.Generator, grid: GridSpec, cell: CellId, emission: Emission, count: int
) -> np.ndarray:
    x0, y0 = grid.cell_origin(cell)
    cs = grid.cell_size
    if emission.pattern == "clustered":
        side = emission.spread * cs
        cx = x0 + side / 2 + rng.uniform(0.0, cs - side)
        cy = y0 + side / 2 + rng.uniform(0.0, cs - side)
        xs = cx + rng.uniform(-side / 2, side / 2, size=count)
        ys = cy + rng.uniform(-side / 2, side / 2, size=count)
    else:
        m = int(np.ceil(np.sqrt(count)))
        spacing = cs / m
        sites = rng.choice(m * m, size=count, replace=False)
        cols = sites % m
        rows = sites // m
        jitter = emission.spread * spacing / 2
        xs = x0 + (cols + 0.5) * spacing + rng.uniform(-jitter, jitter, size=count)
        ys = y0 + (rows + 0.5) * spacing + rng.uniform(-jitter, jitter, size=count)
    return np.column_stack([xs, ys])


def generate_synthetic(scenario: ScenarioConfig, seed: int) -> EventSet:
    """Synthetic EventSet only; use simulate_scenario to keep the ground truth."""
    return simulate_scenario(scenario, seed).events


def write_truth_csv(result: SyntheticResult, scenario: ScenarioConfig, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["cell_col", "cell_row", "year", "state", "region"])
    for cell in sorted(result.region_of, key=lambda c: (c.row, c.col)):
        for k, year in enumerate(range(scenario.year_min, scenario.year_max + 1)):
            writer.writerow(
                [
                    cell.col,
                    cell.row,
                    year,
                    STATE_NAMES[result.planted[cell.row, cell.col, k]],
                    result.region_of[cell],
                ]
            )
