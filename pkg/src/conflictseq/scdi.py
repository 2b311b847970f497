"""Five-state conflict classification of grid cell-years.

Each cell-year with events is rated on two axes: intensity (event count
above/below the pooled mean over violent cell-years) and concentration
(Clark-Evans nearest-neighbor index below/above 1). Cell-years with no
events are NC.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import IO, Optional

import numpy as np
from scipy.spatial import cKDTree

from .grid import CellId, GridSpec
from .ingest import EventSet


class State(enum.Enum):
    NC = 0  # no conflict
    CL = 1  # clustered / low-intensity
    CH = 2  # clustered / high-intensity
    DL = 3  # dispersed / low-intensity
    DH = 4  # dispersed / high-intensity

    def __str__(self) -> str:
        return self.name


STATES: tuple[State, ...] = tuple(State)
STATE_NAMES: tuple[str, ...] = tuple(s.name for s in STATES)
VIOLENT_STATES: tuple[State, ...] = (State.CL, State.CH, State.DL, State.DH)
N_STATES = len(STATES)


def state_from_name(name: str) -> State:
    return State[name]


def field_years(events: EventSet) -> range:
    return range(events.year_min, events.year_max + 1)


def intensity_threshold(events: EventSet) -> float:
    """Mean event count over cell-years with at least one event.

    Pooled over the full span and study area; this single global value
    separates HIGH from LOW intensity everywhere.
    """
    counts = events.counts_by_cell_year()
    if not counts:
        raise ValueError("no violent cell-years: nothing to classify")
    return float(sum(counts.values())) / len(counts)


def nearest_neighbor_index(points: np.ndarray, cell_area: float) -> float:
    """Clark-Evans nearest-neighbor index for a point set within one cell.

    Ratio of the mean observed nearest-neighbor distance to the CSR
    expectation 0.5 * sqrt(cell_area / n). Values below 1 indicate
    clustering; co-located duplicates give 0.

    Parameters
    ----------
    points : (n, 2) array of coordinates, n >= 2
    cell_area : area of the containing cell, > 0
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least 2 points with 2 coordinates each")
    if cell_area <= 0:
        raise ValueError("cell_area must be > 0")
    n = pts.shape[0]
    tree = cKDTree(pts)
    dists, _ = tree.query(pts, k=2)
    observed = float(dists[:, 1].mean())
    expected = 0.5 * np.sqrt(cell_area / n)
    return observed / expected


def classify_cell_year(
    count: int,
    threshold: float,
    nni: Optional[float] = None,
    single_event_rule: str = "dispersed",
) -> State:
    """Classify one cell-year from its event count and concentration.

    count = 0 is NC. Intensity is HIGH iff count > threshold (a count
    exactly at the threshold is LOW). Concentration is CLUSTERED iff
    nni < 1.0; when nni is unavailable (count < 2) the ``single_event_rule``
    applies ("dispersed" by default, "clustered" as the configurable
    alternative).
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return State.NC
    if threshold <= 0:
        raise ValueError("threshold must be > 0 when classifying violent cell-years")
    high = count > threshold
    if nni is None:
        if single_event_rule not in ("dispersed", "clustered"):
            raise ValueError(f"unknown single_event_rule {single_event_rule!r}")
        clustered = single_event_rule == "clustered"
    else:
        clustered = nni < 1.0
    if clustered:
        return State.CH if high else State.CL
    return State.DH if high else State.DL


@dataclass
class StateField:
    """Complete (cell, year) -> state lattice over a grid.

    ``codes`` holds State values as uint8 with shape (n_rows, n_cols, T)
    where T spans years[0]..years[-1].
    """

    grid: GridSpec
    year_min: int
    year_max: int
    codes: np.ndarray
    threshold: float

    @property
    def years(self) -> range:
        return range(self.year_min, self.year_max + 1)

    @property
    def n_years(self) -> int:
        return self.year_max - self.year_min + 1

    def state(self, cell: CellId, year: int) -> State:
        return State(int(self.codes[cell.row, cell.col, year - self.year_min]))

    def cell_codes(self, cell: CellId) -> np.ndarray:
        return self.codes[cell.row, cell.col, :]


def build_state_field(
    events: EventSet,
    threshold_scope: str = "global",
    single_event_rule: str = "dispersed",
) -> StateField:
    """Classify every (cell, year) of the event set's grid and span.

    The intensity threshold is computed once over the whole dataset by
    default; ``threshold_scope="per_year"`` recomputes it within each year
    (exposed for sensitivity checks, not the default analysis).
    """
    if threshold_scope not in ("global", "per_year"):
        raise ValueError(f"unknown threshold_scope {threshold_scope!r}")
    grid = events.grid
    t = events.year_max - events.year_min + 1
    codes = np.zeros((grid.n_rows, grid.n_cols, t), dtype=np.uint8)

    if not events.records:
        return StateField(grid, events.year_min, events.year_max, codes, threshold=0.0)

    points: dict[tuple[CellId, int], list[tuple[float, float]]] = {}
    for rec in events.records:
        points.setdefault((rec.cell, rec.year), []).append((rec.lon, rec.lat))

    pooled = intensity_threshold(events)
    if threshold_scope == "global":
        thresholds = {year: pooled for year in field_years(events)}
    else:
        per_year: dict[int, list[int]] = {}
        for (_, year), pts in points.items():
            per_year.setdefault(year, []).append(len(pts))
        thresholds = {
            year: (sum(per_year[year]) / len(per_year[year]) if year in per_year else 0.0)
            for year in field_years(events)
        }

    area = grid.cell_area
    for (cell, year), pts in points.items():
        nni = nearest_neighbor_index(np.array(pts), area) if len(pts) >= 2 else None
        state = classify_cell_year(
            len(pts), thresholds[year], nni, single_event_rule=single_event_rule
        )
        codes[cell.row, cell.col, year - events.year_min] = state.value

    return StateField(grid, events.year_min, events.year_max, codes, threshold=pooled)


def write_state_field_csv(field: StateField, stream: IO[str]) -> None:
    """Long-format export: one row per (cell, year)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["cell_col", "cell_row", "year", "state"])
    for cell in field.grid.all_cells():
        row = field.codes[cell.row, cell.col, :]
        for k, year in enumerate(field.years):
            writer.writerow([cell.col, cell.row, year, STATE_NAMES[row[k]]])


def read_state_field_csv(
    stream: IO[str], grid: GridSpec, year_min: int, year_max: int, threshold: float
) -> StateField:
    reader = csv.DictReader(stream)
    t = year_max - year_min + 1
    codes = np.zeros((grid.n_rows, grid.n_cols, t), dtype=np.uint8)
    for row in reader:
        codes[int(row["cell_row"]), int(row["cell_col"]), int(row["year"]) - year_min] = State[
            row["state"]
        ].value
    return StateField(grid, year_min, year_max, codes, threshold)


def state_field_geojson(field: StateField, only_violent: bool = True) -> dict:
    """GeoJSON FeatureCollection of cell polygons with per-year state properties."""
    features = []
    for cell in field.grid.all_cells():
        row = field.codes[cell.row, cell.col, :]
        if only_violent and not row.any():
            continue
        props: dict[str, object] = {"cell_col": cell.col, "cell_row": cell.row}
        for k, year in enumerate(field.years):
            props[f"state_{year}"] = STATE_NAMES[row[k]]
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(pt) for pt in field.grid.cell_polygon(cell)]],
                },
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}
