"""Lattice value types and the region algebra the detector is built on.

Coordinates are 1-based, matching the index sets {1..n_i} of the lattice and the
file formats. Regions store their points in lexicographic order so that equal
regions compare, hash and serialise identically.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from modules.errors import EmptyRegionError, GridMismatchError, InputError

logger = logging.getLogger(__name__)

Point = Tuple[int, ...]
Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean_metric(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between two coordinate arrays."""
    return cdist(a, b)


@dataclass(frozen=True)
class GridSpec:
    """Lattice dimensions n_1..n_d."""

    dims: Tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dims)
        if not dims:
            raise InputError("a grid needs at least one axis")
        if any(v < 1 for v in dims):
            raise InputError(f"grid dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_max(self) -> int:
        return max(self.dims)

    def contains(self, point: Sequence[int]) -> bool:
        return len(point) == self.d and all(1 <= c <= n for c, n in zip(point, self.dims))

    def points(self) -> np.ndarray:
        """All lattice points in canonical (row-major) order, shape (n, d)."""
        idx = np.indices(self.dims).reshape(self.d, -1).T
        return idx + 1

    def flat_index(self, coords: np.ndarray) -> np.ndarray:
        """Row-major flat indices of 1-based coordinates."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        return np.ravel_multi_index(tuple((coords - 1).T), self.dims)


@dataclass(frozen=True)
class Region:
    """A duplicate-free, lexicographically ordered set of lattice points."""

    points: Tuple[Point, ...] = ()

    def __post_init__(self):
        canonical = tuple(sorted({tuple(int(c) for c in p) for p in self.points}))
        if canonical and len({len(p) for p in canonical}) != 1:
            raise GridMismatchError("region mixes points of different dimension")
        object.__setattr__(self, "points", canonical)

    @classmethod
    def from_array(cls, coords: np.ndarray) -> "Region":
        return cls(tuple(map(tuple, np.asarray(coords, dtype=np.int64).tolist())))

    @classmethod
    def from_json_dict(cls, payload: Dict) -> "Region":
        return cls(tuple(tuple(p) for p in payload.get("points", [])))

    def to_json_dict(self) -> Dict:
        return {"points": [list(p) for p in self.points]}

    @property
    def d(self) -> Optional[int]:
        return len(self.points[0]) if self.points else None

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.points)

    def __contains__(self, point) -> bool:
        return tuple(point) in self.as_set()

    def as_set(self) -> frozenset:
        return frozenset(self.points)

    def coords(self) -> np.ndarray:
        """Points as an integer array of shape (|R|, d)."""
        if not self.points:
            return np.zeros((0, 0), dtype=np.int64)
        return np.array(self.points, dtype=np.int64)

    def union(self, other: "Region") -> "Region":
        _check_same_dimension(self, other)
        return Region(self.points + other.points)

    def difference(self, other: "Region") -> "Region":
        _check_same_dimension(self, other)
        drop = other.as_set()
        return Region(tuple(p for p in self.points if p not in drop))

    def intersection(self, other: "Region") -> "Region":
        _check_same_dimension(self, other)
        keep = other.as_set()
        return Region(tuple(p for p in self.points if p in keep))

    def translate(self, offset: Sequence[int]) -> "Region":
        return Region(tuple(tuple(c + o for c, o in zip(p, offset)) for p in self.points))

    def check_within(self, grid: GridSpec) -> None:
        for p in self.points:
            if not grid.contains(p):
                raise GridMismatchError(f"point {p} lies outside grid {grid.dims}")


def _check_same_dimension(a: Region, b: Region) -> None:
    if a.d is not None and b.d is not None and a.d != b.d:
        raise GridMismatchError(f"regions live on lattices of dimension {a.d} and {b.d}")


def symmetric_difference(a: Region, b: Region, grid: Optional[GridSpec] = None) -> int:
    """|A \\ B| + |B \\ A|."""
    _check_same_dimension(a, b)
    if grid is not None:
        a.check_within(grid)
        b.check_within(grid)
    return len(a.as_set() ^ b.as_set())


def region_distance(a: Region, b: Region, metric: Metric = euclidean_metric) -> float:
    """Smallest distance between any point of `a` and any point of `b`."""
    if not len(a) or not len(b):
        raise EmptyRegionError("region distance needs two nonempty regions")
    _check_same_dimension(a, b)
    return float(metric(a.coords(), b.coords()).min())


def intrinsic_diameter(region: Region, metric: Metric = euclidean_metric) -> float:
    """Largest pairwise distance inside a region, 0 for a singleton."""
    if not len(region):
        raise EmptyRegionError("intrinsic diameter of an empty region")
    coords = region.coords()
    return float(metric(coords, coords).max())


def count_runs(values: Iterable[int]) -> int:
    """Number of maximal runs of consecutive integers."""
    ordered = sorted(values)
    if not ordered:
        return 0
    return 1 + sum(1 for prev, cur in zip(ordered, ordered[1:]) if cur - prev > 1)


def smoothness_index(region: Region, axis: int) -> int:
    """Max number of runs of `region` on any line parallel to `axis` (1-based)."""
    if not len(region):
        return 0
    d = region.d
    if not 1 <= axis <= d:
        raise InputError(f"axis must lie in [1, {d}], got {axis}")
    k = axis - 1
    lines: Dict[Point, List[int]] = {}
    for p in region.points:
        lines.setdefault(p[:k] + p[k + 1:], []).append(p[k])
    return max(count_runs(v) for v in lines.values())


def in_smooth_class(region: Region, K: int) -> bool:
    """Whether the region splits into at most K runs along every axis."""
    if not len(region):
        return True
    return all(smoothness_index(region, axis) <= K for axis in range(1, region.d + 1))


@dataclass(frozen=True, eq=False)
class Field:
    """Observed values on a grid plus an optional validity mask (True = valid)."""

    grid: GridSpec
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.dims:
            raise GridMismatchError(
                f"values of shape {values.shape} do not match grid {self.grid.dims}"
            )
        mask = None
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.grid.dims:
                raise GridMismatchError("mask shape does not match grid")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_array(cls, values, mask=None) -> "Field":
        values = np.asarray(values, dtype=np.float64)
        return cls(GridSpec(values.shape), values, mask)

    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.dims, dtype=bool)
        return self.mask

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask().sum())

    def valid_points(self) -> np.ndarray:
        """Coordinates of unmasked cells in canonical order."""
        return self.grid.points()[self.valid_mask().ravel()]

    def valid_values(self) -> np.ndarray:
        return self.values.ravel()[self.valid_mask().ravel()]

    def valid_region(self) -> Region:
        return Region.from_array(self.valid_points())

    def values_of(self, region: Region) -> np.ndarray:
        """Values over a region, in the region's canonical order."""
        if not len(region):
            return np.zeros(0)
        region.check_within(self.grid)
        flat = self.grid.flat_index(region.coords())
        if not self.valid_mask().ravel()[flat].all():
            raise InputError("region covers masked cells")
        return self.values.ravel()[flat]

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.mask)


@dataclass(frozen=True)
class Partition:
    """Baseline R_0 plus pairwise disjoint anomaly regions R_1..R_m."""

    baseline: Region
    anomalies: Tuple[Region, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "anomalies", tuple(self.anomalies))
        seen = set(self.baseline.points)
        for region in self.anomalies:
            overlap = seen.intersection(region.points)
            if overlap:
                raise InputError(f"partition parts overlap at {sorted(overlap)[0]}")
            seen.update(region.points)

    @classmethod
    def from_anomalies(cls, field: Field, anomalies: Sequence[Region]) -> "Partition":
        """Build the partition whose baseline is every valid cell outside the anomalies."""
        anomalies = tuple(r for r in anomalies if len(r))
        valid = field.valid_mask()
        taken = np.zeros(field.grid.dims, dtype=bool)
        for region in anomalies:
            region.check_within(field.grid)
            idx = tuple((region.coords() - 1).T)
            if not valid[idx].all():
                raise InputError("anomaly region covers masked cells")
            if taken[idx].any():
                raise InputError("anomaly regions overlap")
            taken[idx] = True
        baseline = Region.from_array(field.grid.points()[(valid & ~taken).ravel()])
        return cls(baseline, anomalies)

    @property
    def m(self) -> int:
        return len(self.anomalies)

    def covered(self) -> Region:
        out = self.baseline
        for region in self.anomalies:
            out = out.union(region)
        return out
