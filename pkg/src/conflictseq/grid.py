"""Regular square grid over the event coordinate space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class CellId(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned square grid in the input coordinate space.

    Cells are ``cell_size`` wide; cell (0, 0) has its lower-left corner at
    (origin_x, origin_y). Degree-based cells are not equal-area; pass
    pre-projected coordinates when that matters. ``coordinate_space`` is
    documentation only.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    n_cols: int
    n_rows: int
    coordinate_space: str = "unspecified"

    def __post_init__(self) -> None:
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid must have at least one column and one row")

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size

    def contains(self, x: float, y: float) -> bool:
        return (
            self.origin_x <= x < self.origin_x + self.n_cols * self.cell_size
            and self.origin_y <= y < self.origin_y + self.n_rows * self.cell_size
        )

    def cell_of(self, x: float, y: float) -> CellId:
        """Map a point to its cell (left/bottom-inclusive convention).

        A point on a shared edge belongs to the cell with the larger index
        along that axis, i.e. col = floor((x - origin_x) / cell_size).
        Raises ValueError for points outside the grid bounds.
        """
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite coordinates ({x}, {y})")
        if not self.contains(x, y):
            raise ValueError(f"point ({x}, {y}) outside grid bounds")
        col = int(math.floor((x - self.origin_x) / self.cell_size))
        row = int(math.floor((y - self.origin_y) / self.cell_size))
        # guard against float rounding on the upper edges
        col = min(col, self.n_cols - 1)
        row = min(row, self.n_rows - 1)
        return CellId(col, row)

    def cell_origin(self, cell: CellId) -> tuple[float, float]:
        return (
            self.origin_x + cell.col * self.cell_size,
            self.origin_y + cell.row * self.cell_size,
        )

    def cell_polygon(self, cell: CellId) -> list[tuple[float, float]]:
        """Closed ring of the cell's corners, counter-clockwise."""
        x0, y0 = self.cell_origin(cell)
        x1, y1 = x0 + self.cell_size, y0 + self.cell_size
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]

    def all_cells(self) -> list[CellId]:
        """Every cell in row-major order (row 0 first)."""
        return [CellId(c, r) for r in range(self.n_rows) for c in range(self.n_cols)]


def assign_cell(x: float, y: float, grid: GridSpec) -> CellId:
    """Assign a point to a grid cell; see GridSpec.cell_of for the convention."""
    return grid.cell_of(x, y)
