"""Optimal Matching edit distances between state sequences.

The distance between two sequences is the cheapest series of insertions,
deletions, and substitutions transforming one into the other, computed by
dynamic programming. All-pairs computation runs as a parallel kernel over
the condensed pair index; every pair writes only its own slot, so results
are identical for any worker count.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import IO, Optional, Sequence, Union

import numpy as np

from .grid import CellId
from .sequences import CostMatrix, SequenceSet, StateSequence

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


MAGIC = b"OMDM\x01"


def _dp_py(a: np.ndarray, b: np.ndarray, sub: np.ndarray, indel: float) -> float:
    la, lb = a.shape[0], b.shape[0]
    prev = [j * indel for j in range(lb + 1)]
    cur = [0.0] * (lb + 1)
    for i in range(1, la + 1):
        cur[0] = i * indel
        ai = a[i - 1]
        for j in range(1, lb + 1):
            best = prev[j - 1] + sub[ai, b[j - 1]]
            up = prev[j] + indel
            if up < best:
                best = up
            left = cur[j - 1] + indel
            if left < best:
                best = left
            cur[j] = best
        prev, cur = cur, prev
    return prev[lb]


@njit(cache=True)
def _dp_nb(a, b, sub, indel):  # pragma: no cover - exercised via pairwise kernel
    la = a.shape[0]
    lb = b.shape[0]
    prev = np.empty(lb + 1, dtype=np.float64)
    cur = np.empty(lb + 1, dtype=np.float64)
    for j in range(lb + 1):
        prev[j] = j * indel
    for i in range(1, la + 1):
        cur[0] = i * indel
        ai = a[i - 1]
        for j in range(1, lb + 1):
            best = prev[j - 1] + sub[ai, b[j - 1]]
            up = prev[j] + indel
            if up < best:
                best = up
            left = cur[j - 1] + indel
            if left < best:
                best = left
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[lb]


@njit(cache=True, parallel=True)
def _pairwise_nb(codes, sub, indel, out):  # pragma: no cover - thin parallel driver
    n = codes.shape[0]
    for k in prange(out.shape[0]):
        # invert the condensed index: row i starts at i*(2n-i-1)/2
        i = int((2 * n - 1 - math.sqrt((2.0 * n - 1.0) ** 2 - 8.0 * k)) / 2.0)
        if i < 0:
            i = 0
        while i * (2 * n - i - 1) // 2 > k:
            i -= 1
        while (i + 1) * (2 * n - i - 2) // 2 <= k:
            i += 1
        j = k - i * (2 * n - i - 1) // 2 + i + 1
        out[k] = _dp_nb(codes[i], codes[j], sub, indel)


def _as_codes(seq: Union[StateSequence, Sequence, np.ndarray]) -> np.ndarray:
    if isinstance(seq, StateSequence):
        return seq.codes()
    arr = np.asarray(seq)
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype.kind in "iu":
        return arr.astype(np.uint8)
    # sequence of State members
    return np.array([s.value for s in seq], dtype=np.uint8)


def om_distance(
    a: Union[StateSequence, Sequence, np.ndarray],
    b: Union[StateSequence, Sequence, np.ndarray],
    costs: CostMatrix,
    normalize: bool = False,
) -> float:
    """Optimal Matching distance between two sequences.

    Symmetric in its arguments; lengths may differ. With ``normalize`` the
    raw cost is divided by the longer length (the pipeline itself always
    compares equal-length sequences and keeps raw costs).
    """
    ca, cb = _as_codes(a), _as_codes(b)
    d = _dp_py(ca, cb, costs.sub, costs.indel)
    if normalize:
        longest = max(len(ca), len(cb))
        d = d / longest if longest else 0.0
    return float(d)


def condensed_index(n: int, i: int, j: int) -> int:
    """Flat index of pair (i, j), i < j, in condensed order."""
    if i > j:
        i, j = j, i
    if i == j or j >= n:
        raise IndexError(f"invalid pair ({i}, {j}) for n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@dataclass
class DistanceMatrix:
    """Condensed pairwise distances with per-index cell labels."""

    n: int
    d: np.ndarray
    labels: list[CellId]

    def __post_init__(self) -> None:
        expected = self.n * (self.n - 1) // 2
        if self.d.shape != (expected,):
            raise ValueError(f"condensed array must have {expected} entries")
        if len(self.labels) != self.n:
            raise ValueError("one label per sequence required")

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.d[condensed_index(self.n, i, j)])

    def square(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        k = 0
        for i in range(self.n - 1):
            m = self.n - 1 - i
            out[i, i + 1 : self.n] = self.d[k : k + m]
            out[i + 1 : self.n, i] = self.d[k : k + m]
            k += m
        return out

    def save(self, path) -> None:
        """Binary layout: magic 'OMDM'+version, u64 n, n x (u32 col, u32 row)
        labels, then n(n-1)/2 little-endian float64 in condensed order."""
        with open(path, "wb") as fp:
            fp.write(MAGIC)
            fp.write(struct.pack("<Q", self.n))
            for cell in self.labels:
                fp.write(struct.pack("<II", cell.col, cell.row))
            fp.write(self.d.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        with open(path, "rb") as fp:
            magic = fp.read(len(MAGIC))
            if magic != MAGIC:
                raise ValueError(f"not a distance matrix file (magic {magic!r})")
            (n,) = struct.unpack("<Q", fp.read(8))
            labels = []
            for _ in range(n):
                col, row = struct.unpack("<II", fp.read(8))
                labels.append(CellId(col, row))
            m = n * (n - 1) // 2
            data = np.frombuffer(fp.read(8 * m), dtype="<f8").astype(np.float64)
        return cls(n=int(n), d=data, labels=labels)

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["i", "j", "cell_i", "cell_j", "distance"])
        for i in range(self.n - 1):
            for j in range(i + 1, self.n):
                writer.writerow(
                    [
                        i,
                        j,
                        f"{self.labels[i].col}:{self.labels[i].row}",
                        f"{self.labels[j].col}:{self.labels[j].row}",
                        repr(self.get(i, j)),
                    ]
                )


def pairwise_distances(
    seqs: SequenceSet,
    costs: CostMatrix,
    workers: Optional[int] = None,
    normalize: bool = False,
) -> DistanceMatrix:
    """All unordered pair distances in condensed order.

    ``workers`` caps the thread count (default: all available). Output is
    deterministic regardless of the worker count.
    """
    n = len(seqs)
    if n < 2:
        raise ValueError("need at least 2 sequences")
    codes = seqs.code_matrix()
    out = np.empty(n * (n - 1) // 2, dtype=np.float64)
    sub = np.ascontiguousarray(costs.sub, dtype=np.float64)
    if HAVE_NUMBA:
        if workers and workers > 0:
            numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
        _pairwise_nb(codes, sub, float(costs.indel), out)
    else:  # pragma: no cover
        k = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                out[k] = _dp_py(codes[i], codes[j], sub, costs.indel)
                k += 1
    if normalize and seqs.t:
        out /= seqs.t
    return DistanceMatrix(n=n, d=out, labels=seqs.cells)
