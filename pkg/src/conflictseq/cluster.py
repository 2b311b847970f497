"""Agglomerative Ward clustering of the optimal-matching distance matrix.

Ward on edit distances is formally improper (the distances are not
Euclidean) but standard in sequence analysis; the input distances are
squared and merged greedily under the Lance-Williams Ward update, so each
merge minimizes the within-cluster squared edit distance. Merge heights are
reported in that squared space.

Tie rule: every active cluster is identified by the smallest leaf index it
contains; among merges of equal cost the pair with the lexicographically
smallest (smaller id, larger id) tuple wins. This makes the dendrogram
deterministic across platforms and evaluation orders.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, NamedTuple, Optional

import numpy as np

from .grid import CellId
from .om import DistanceMatrix


class Merge(NamedTuple):
    node_a: int  # leaf ids are 0..n-1, cluster created by merge t is n+t
    node_b: int
    height: float
    size: int


@dataclass
class Dendrogram:
    n_leaves: int
    merges: list[Merge]
    labels: list[CellId]

    def __post_init__(self) -> None:
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError("a dendrogram over n leaves has exactly n-1 merges")


def ward_linkage(dm: DistanceMatrix) -> Dendrogram:
    """Greedy Ward merge tree over squared input distances.

    Maintains per-row nearest-neighbor caches over the Lance-Williams
    distance matrix; Ward's reducibility keeps the caches valid so the
    result is exactly the globally-greedy merge order under the tie rule.
    """
    n = dm.n
    if n < 2:
        raise ValueError("need at least 2 sequences to cluster")
    D = dm.square() ** 2
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    node_id = np.arange(n)
    merges: list[Merge] = []

    INF = np.inf
    best_d = np.full(n, INF)
    best_j = np.full(n, -1, dtype=np.int64)

    def rescan(i: int) -> None:
        js = np.nonzero(active[i + 1 :])[0]
        if js.size == 0:
            best_d[i] = INF
            best_j[i] = -1
            return
        js = js + i + 1
        row = D[i, js]
        k = int(np.argmin(row))  # argmin returns the first (smallest j) minimum
        best_d[i] = row[k]
        best_j[i] = js[k]

    for i in range(n):
        rescan(i)

    for step in range(n - 1):
        candidates = np.nonzero(active)[0]
        ai = candidates[int(np.argmin(best_d[candidates]))]
        a, b = int(ai), int(best_j[ai])
        height = float(D[a, b])
        sa, sb = int(sizes[a]), int(sizes[b])

        # Lance-Williams Ward update, written into the surviving slot a
        others = np.nonzero(active)[0]
        others = others[(others != a) & (others != b)]
        if others.size:
            sk = sizes[others].astype(float)
            tot = sa + sb + sk
            new = ((sa + sk) * D[a, others] + (sb + sk) * D[b, others] - sk * height) / tot
            D[a, others] = new
            D[others, a] = new

        lo, hi = (a, b) if node_id[a] <= node_id[b] else (b, a)
        merges.append(Merge(int(node_id[lo]), int(node_id[hi]), height, sa + sb))
        sizes[a] = sa + sb
        active[b] = False
        node_id[a] = n + step

        rescan(a)
        for k in others[others < b]:
            k = int(k)
            if best_j[k] in (a, b):
                rescan(k)
            elif k < a:
                # the updated D[k, a] cannot undercut the cached minimum
                # (reducibility), but on an exact tie the smaller column wins
                if D[k, a] == best_d[k] and a < best_j[k]:
                    best_j[k] = a
    return Dendrogram(n_leaves=n, merges=merges, labels=list(dm.labels))


@dataclass
class ClusterAssignment:
    """Cluster ids 1..k for every clustered cell.

    ``never_violent_label`` is the sentinel used for all-NC cells that were
    excluded before clustering when full-grid exports are produced.
    """

    cells: list[CellId]
    labels: np.ndarray
    k: int
    never_violent_label: Optional[int] = 0

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.labels):
            raise ValueError("one label per cell required")
        present = set(int(v) for v in self.labels)
        if present and present != set(range(1, self.k + 1)):
            raise ValueError(f"labels must cover 1..{self.k}, got {sorted(present)}")

    def __len__(self) -> int:
        return len(self.cells)

    def mapping(self) -> dict[CellId, int]:
        return {cell: int(lab) for cell, lab in zip(self.cells, self.labels)}

    def members(self, cluster: int) -> list[CellId]:
        return [cell for cell, lab in zip(self.cells, self.labels) if lab == cluster]

    def sizes(self) -> dict[int, int]:
        return {c: int((self.labels == c).sum()) for c in range(1, self.k + 1)}


def cut(dg: Dendrogram, k: int) -> ClusterAssignment:
    """Cut the dendrogram into k clusters by removing the k-1 last merges.

    Cluster ids are assigned by decreasing size, ties broken by the
    smallest contained leaf index.
    """
    n = dg.n_leaves
    if not (1 <= k <= n):
        raise ValueError(f"k must be in [1, {n}]")
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    node_root = {i: i for i in range(n)}
    for t, merge in enumerate(dg.merges[: n - k]):
        ra, rb = find(node_root[merge.node_a]), find(node_root[merge.node_b])
        parent[rb] = ra
        node_root[n + t] = ra

    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)
    ordered = sorted(groups.values(), key=lambda g: (-len(g), min(g)))
    labels = np.zeros(n, dtype=np.int64)
    for cid, leaves in enumerate(ordered, start=1):
        for leaf in leaves:
            labels[leaf] = cid
    return ClusterAssignment(cells=list(dg.labels), labels=labels, k=k)


def to_newick(dg: Dendrogram) -> str:
    """Newick text with branch lengths from the (squared-space) merge heights."""
    n = dg.n_leaves
    height = {i: 0.0 for i in range(n)}
    children: dict[int, tuple[int, int]] = {}
    for t, merge in enumerate(dg.merges):
        node = n + t
        children[node] = (merge.node_a, merge.node_b)
        height[node] = merge.height

    def render(node: int, parent_h: float) -> str:
        length = parent_h - height[node]
        if node < n:
            cell = dg.labels[node]
            return f"c{cell.col}_{cell.row}:{length:.12g}"
        a, b = children[node]
        h = height[node]
        return f"({render(a, h)},{render(b, h)}):{length:.12g}"

    root = n + len(dg.merges) - 1
    a, b = children[root]
    h = height[root]
    return f"({render(a, h)},{render(b, h)});"


def write_merges_csv(dg: Dendrogram, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["step", "node_a", "node_b", "height", "size"])
    for t, merge in enumerate(dg.merges):
        writer.writerow([t, merge.node_a, merge.node_b, repr(merge.height), merge.size])


def write_assignment_csv(assign: ClusterAssignment, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["cell_col", "cell_row", "cluster"])
    for cell, label in zip(assign.cells, assign.labels):
        writer.writerow([cell.col, cell.row, int(label)])


def read_assignment_csv(stream: IO[str]) -> ClusterAssignment:
    reader = csv.DictReader(stream)
    cells, labels = [], []
    for row in reader:
        cells.append(CellId(int(row["cell_col"]), int(row["cell_row"])))
        labels.append(int(row["cluster"]))
    arr = np.array(labels, dtype=np.int64)
    return ClusterAssignment(cells=cells, labels=arr, k=int(arr.max()) if len(arr) else 0)


def assignment_geojson(assign: ClusterAssignment, grid, full_grid: bool = False) -> dict:
    """GeoJSON cell polygons with a ``cluster`` property (the trajectory map).

    With ``full_grid`` every grid cell appears and unclustered cells carry
    the never-violent sentinel label.
    """
    mapping = assign.mapping()
    cells = grid.all_cells() if full_grid else assign.cells
    features = []
    for cell in cells:
        label = mapping.get(cell, assign.never_violent_label)
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(pt) for pt in grid.cell_polygon(cell)]],
                },
                "properties": {"cell_col": cell.col, "cell_row": cell.row, "cluster": label},
            }
        )
    return {"type": "FeatureCollection", "features": features}
