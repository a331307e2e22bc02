"""Point patterns, spatial indexing and the two distance families.

Estimation consumes two kinds of distances from an observed pattern:
nearest-neighbour distances (each data point to its nearest other data
point) and empty-space distances (each evaluation-grid point to the nearest
data point). Both are computed through :class:`GridIndex`, a uniform-bucket
index with expanding-ring search that returns exactly the brute-force
result, never an approximation.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import EvaluationGrid, Window

NN = "nn"
EMPTY_SPACE = "empty-space"


class PatternError(ValueError):
    """Invalid point pattern or distance query."""


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite point set strictly inside a window.

    Parameters
    ----------
    points : ndarray of shape (n, dim)
        Point coordinates; duplicates and boundary/outside points are
        rejected.
    window : Window
        Observation window the pattern lives in.
    """

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.dim)
        if pts.ndim != 2 or pts.shape[1] != self.window.dim:
            raise PatternError(
                f"points must have shape (n, {self.window.dim}), got {pts.shape}"
            )
        if len(pts) and not np.all(self.window.contains(pts)):
            raise PatternError("all points must lie strictly inside the window")
        if len(pts) > 1:
            order = np.lexsort(pts.T)
            if np.any(np.all(pts[order][1:] == pts[order][:-1], axis=1)):
                raise PatternError("duplicate point coordinates are not allowed")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def intensity(self) -> float:
        """Observed intensity n / |W|."""
        return self.n / self.window.volume()

    @cached_property
    def _index(self) -> "GridIndex":
        return GridIndex(self.points, self.window)

    # -- CSV round trip ----------------------------------------------------

    def to_csv(self, path):
        header = ["x", "y", "z"][: self.dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, window: Window) -> "PointPattern":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["x", "y", "z"][: window.dim]:
                raise PatternError(
                    f"{path}: expected header {'x,y,z'[: 2 * window.dim - 1]!r}"
                )
            rows = [[float(v) for v in row] for row in reader if row]
        pts = np.asarray(rows, dtype=float).reshape(len(rows), window.dim)
        return cls(points=pts, window=window)


@dataclass(frozen=True, eq=False)
class DistanceSet:
    """Distances of one family plus optional censoring distances.

    ``kind`` is ``"nn"`` (one value per data point) or ``"empty-space"``
    (one value per grid point). ``censor`` holds the boundary distance of
    each source point when reduced-sample or Kaplan-Meier estimation is
    intended.
    """

    kind: str
    values: np.ndarray
    censor: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.kind not in (NN, EMPTY_SPACE):
            raise PatternError(f"unknown distance kind {self.kind!r}")
        if np.any(vals < 0):
            raise PatternError("distances must be nonnegative")
        if self.kind == NN and not np.all(vals > 0):
            raise PatternError("nearest-neighbour distances must be positive")
        if self.censor is not None:
            cen = np.asarray(self.censor, dtype=float)
            if cen.shape != vals.shape:
                raise PatternError("censor distances must match values in length")
            object.__setattr__(self, "censor", cen)
        object.__setattr__(self, "values", vals)


_RING_OFFSETS: dict[tuple[int, int], np.ndarray] = {}


def _ring_offsets(dim: int, k: int) -> np.ndarray:
    """Integer cell offsets at Chebyshev distance exactly k."""
    key = (dim, k)
    if key not in _RING_OFFSETS:
        if k == 0:
            off = np.zeros((1, dim), dtype=np.intp)
        else:
            off = np.array(
                [
                    o
                    for o in itertools.product(range(-k, k + 1), repeat=dim)
                    if max(abs(c) for c in o) == k
                ],
                dtype=np.intp,
            )
        _RING_OFFSETS[key] = off
    return _RING_OFFSETS[key]


def _ragged_take(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenated ranges [starts[i], starts[i]+counts[i]) for counts > 0."""
    total = int(counts.sum())
    out = np.ones(total, dtype=np.intp)
    out[0] = starts[0]
    bounds = np.cumsum(counts[:-1])
    out[bounds] = starts[1:] - (starts[:-1] + counts[:-1] - 1)
    return np.cumsum(out)


class GridIndex:
    """Uniform-bucket index over a point set for exact nearest queries.

    Bucket side is about the expected nearest-neighbour spacing
    ``(|W| / n) ** (1/dim)``; queries expand over rings of buckets and stop
    once the best distance found is guaranteed smaller than anything in an
    unscanned bucket. Distances equal the brute-force values bit for bit.
    """

    def __init__(self, points: np.ndarray, window: Window, cell_size: float | None = None):
        pts = np.asarray(points, dtype=float)
        self.points = pts
        self.dim = window.dim
        lo, hi = window.bbox()
        self.lo = lo
        n = len(pts)
        if cell_size is None:
            cell_size = (window.volume() / max(n, 1)) ** (1.0 / self.dim)
        self.cell = float(cell_size)
        extent = hi - lo
        self.ncells = np.maximum(1, np.ceil(extent / self.cell).astype(np.intp))
        # a ring of empty sentinel buckets per scannable ring lets the hot
        # path skip bounds checks entirely
        self._pad = int(min(self.ncells.max(), 8))
        shape = self.ncells + 2 * self._pad
        self._strides = np.ones(self.dim, dtype=np.intp)
        for ax in range(self.dim - 2, -1, -1):
            self._strides[ax] = self._strides[ax + 1] * shape[ax + 1]
        nlin = int(np.prod(shape))
        if n:
            lin = ((self._cell_coords(pts) + self._pad) * self._strides).sum(axis=1)
            self._order = np.argsort(lin, kind="stable")
            counts = np.bincount(lin, minlength=nlin)
            self._starts = np.concatenate(([0], np.cumsum(counts)))
        else:
            self._order = np.empty(0, dtype=np.intp)
            self._starts = np.zeros(nlin + 1, dtype=np.intp)
        sorted_pts = pts[self._order] if n else pts
        self._cols = [np.ascontiguousarray(sorted_pts[:, ax]) for ax in range(self.dim)]
        self._lin_offsets: dict[int, np.ndarray] = {}

    def _cell_coords(self, pts: np.ndarray) -> np.ndarray:
        cc = np.floor((pts - self.lo) / self.cell).astype(np.intp)
        return np.clip(cc, 0, self.ncells - 1)

    def _ring_lin(self, k: int) -> np.ndarray:
        if k not in self._lin_offsets:
            if k == 1:
                off = np.concatenate(
                    [_ring_offsets(self.dim, 0), _ring_offsets(self.dim, 1)]
                )
            else:
                off = _ring_offsets(self.dim, k)
            self._lin_offsets[k] = (off * self._strides).sum(axis=1)
        return self._lin_offsets[k]

    def nearest(self, queries: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
        """Distance from each query to its nearest indexed point.

        ``exclude[i]`` names one indexed point that query i must ignore
        (used for self-exclusion in nearest-neighbour queries). Queries with
        no admissible point get +inf (empty index).
        """
        q = np.asarray(queries, dtype=float)
        m = len(q)
        best = np.full(m, np.inf)
        if len(self.points) == 0 or m == 0:
            return best
        qcols = [np.ascontiguousarray(q[:, ax]) for ax in range(self.dim)]
        base_lin = ((self._cell_coords(q) + self._pad) * self._strides).sum(axis=1)
        unresolved = np.arange(m)
        k_exhaust = int(self.ncells.max())
        # the first pass covers rings 0 and 1 together (the own cell alone
        # can never certify a nearest neighbour)
        self._scan(q, qcols, base_lin, unresolved, best, exclude, 1)
        k = 1
        while True:
            # anything unscanned sits at least k*cell away; the small margin
            # guards against cell-assignment rounding at bucket boundaries
            guarantee = k * self.cell * (1.0 - 1e-10)
            unresolved = unresolved[best[unresolved] > guarantee]
            if unresolved.size == 0 or k >= k_exhaust:
                break
            k += 1
            self._scan(q, qcols, base_lin, unresolved, best, exclude, k)
        return best

    def _scan(self, q, qcols, base_lin, idx, best, exclude, k):
        if k <= self._pad:
            ring = self._ring_lin(k)
            lin = (base_lin[idx][:, None] + ring[None, :]).ravel()
            starts = self._starts
            s = starts[lin]
            cnt = starts[lin + 1] - s
            nz = np.flatnonzero(cnt)
            if nz.size == 0:
                return
            rows = idx[nz // len(ring)]
        else:
            # beyond the sentinel padding: bounds-checked fallback
            offs = _ring_offsets(self.dim, k)
            qcell = self._cell_coords(q[idx])
            target = qcell[:, None, :] + offs[None, :, :]
            valid = np.all(
                (target >= -self._pad) & (target < self.ncells + self._pad), axis=2
            ).ravel()
            lin = ((target.reshape(-1, self.dim)[valid] + self._pad) * self._strides).sum(
                axis=1
            )
            allrows = np.repeat(idx, len(offs))[valid]
            starts = self._starts
            s = starts[lin]
            cnt = starts[lin + 1] - s
            nz = np.flatnonzero(cnt)
            if nz.size == 0:
                return
            rows = allrows[nz]
        s = s[nz]
        cnt = cnt[nz]
        take = _ragged_take(s, cnt)  # positions into the bucket-sorted columns
        qrep = np.repeat(rows, cnt)
        dx = qcols[0][qrep] - self._cols[0][take]
        d2 = dx * dx
        for ax in range(1, self.dim):
            dax = qcols[ax][qrep] - self._cols[ax][take]
            d2 = d2 + dax * dax
        dist = np.sqrt(d2)
        if exclude is not None:
            dist[self._order[take] == exclude[qrep]] = np.inf
        # candidates arrive grouped by query (query-major offset order)
        grp = np.flatnonzero(np.concatenate(([True], qrep[1:] != qrep[:-1])))
        dmin = np.minimum.reduceat(dist, grp)
        urows = qrep[grp]
        best[urows] = np.minimum(best[urows], dmin)


def nn_distances(pattern: PointPattern, with_censor: bool = False) -> DistanceSet:
    """Distance from each data point to the nearest other data point.

    Raises
    ------
    PatternError
        If the pattern has fewer than two points.
    """
    if pattern.n < 2:
        raise PatternError("nearest-neighbour undefined for patterns with n < 2")
    d = pattern._index.nearest(pattern.points, exclude=np.arange(pattern.n))
    censor = pattern.window.boundary_distance(pattern.points) if with_censor else None
    return DistanceSet(kind=NN, values=d, censor=censor)


def empty_space_distances(
    pattern: PointPattern, grid: EvaluationGrid, with_censor: bool = False
) -> DistanceSet:
    """Distance from each grid point to the nearest data point (+inf if n=0)."""
    if grid.window != pattern.window:
        raise PatternError("grid must be built on the pattern's window")
    if pattern.n == 0:
        d = np.full(grid.m, np.inf)
    else:
        d = pattern._index.nearest(grid.points)
    censor = grid.boundary_distances if with_censor else None
    return DistanceSet(kind=EMPTY_SPACE, values=d, censor=censor)


def max_distances(nn: DistanceSet, es: DistanceSet) -> tuple[float, float]:
    """(r_Gmax, r_Fmax): the largest nearest-neighbour and empty-space distances.

    These bound the domain of the window-based J estimator: it is defined
    for r < r_Fmax and equals 0 on [r_Gmax, r_Fmax) when r_Gmax < r_Fmax.
    """
    if nn.kind != NN or es.kind != EMPTY_SPACE:
        raise PatternError("max_distances needs one nn and one empty-space set")
    if len(nn.values) == 0 or len(es.values) == 0:
        raise PatternError("max_distances needs nonempty distance sets")
    return float(nn.values.max()), float(es.values.max())
