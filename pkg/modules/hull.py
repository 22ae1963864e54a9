"""Minimum convex hull of a lattice region and exact lattice-point counting.

All geometric predicates use integer arithmetic. Boundary lattice points count as
enclosed (closed hull).
"""

import logging
from dataclasses import dataclass
from math import gcd
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from modules.errors import EmptyRegionError, InfeasibleError, UnsupportedDimensionError
from modules.lattice import Point, Region

logger = logging.getLogger(__name__)

MAX_HULL_DIMENSION = 3

Facet = Tuple[Tuple[int, ...], int]


@dataclass(frozen=True)
class HullPolytope:
    """Vertex (and for 3D, facet) representation of Co(R).

    kind is one of "point", "segment", "polygon" or "polyhedron". A polygon in 3D is
    a flat hull: it lies in `plane` and is tested in the projection that drops
    `drop_axis`.
    """

    d: int
    kind: str
    vertices: Tuple[Point, ...]
    facets: Tuple[Facet, ...] = ()
    plane: Optional[Facet] = None
    drop_axis: Optional[int] = None

    def contains(self, point: Sequence[int]) -> bool:
        if self.kind == "polygon" and self.d == 2:
            verts = self.vertices
            k = len(verts)
            return all(_cross2(verts[i], verts[(i + 1) % k], point) >= 0 for i in range(k))
        return bool(self.contains_many(np.asarray([point], dtype=np.int64))[0])

    def contains_many(self, coords: np.ndarray) -> np.ndarray:
        """Closed-hull membership for an (k, d) integer array."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        verts = np.array(self.vertices, dtype=np.int64)
        if self.kind == "point":
            return (coords == verts[0]).all(axis=1)
        if self.kind == "segment":
            return _on_segment(coords, verts[0], verts[1])
        if self.kind == "polyhedron":
            normals = np.array([f[0] for f in self.facets], dtype=np.int64)
            offsets = np.array([f[1] for f in self.facets], dtype=np.int64)
            return (coords @ normals.T <= offsets).all(axis=1)
        if self.d == 2:
            return _in_polygon(coords, verts)
        normal = np.array(self.plane[0], dtype=np.int64)
        on_plane = coords @ normal == self.plane[1]
        keep = [i for i in range(3) if i != self.drop_axis]
        return on_plane & _in_polygon(coords[:, keep], verts[:, keep])

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        verts = np.array(self.vertices, dtype=np.int64)
        return verts.min(axis=0), verts.max(axis=0)


def _cross2(o: Point, a: Point, b: Point) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(coords: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    u = b - a
    w = coords - a
    inside = np.ones(len(coords), dtype=bool)
    d = len(a)
    for i in range(d):
        for j in range(i + 1, d):
            inside &= u[i] * w[:, j] - u[j] * w[:, i] == 0
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return inside & (coords >= lo).all(axis=1) & (coords <= hi).all(axis=1)


def _in_polygon(coords: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Closed membership in a counter-clockwise convex polygon (2D coordinates)."""
    inside = np.ones(len(coords), dtype=bool)
    k = len(verts)
    for i in range(k):
        a = verts[i]
        b = verts[(i + 1) % k]
        cross = (b[0] - a[0]) * (coords[:, 1] - a[1]) - (b[1] - a[1]) * (coords[:, 0] - a[0])
        inside &= cross >= 0
    return inside


def monotone_chain(points: Sequence[Point]) -> List[Point]:
    """Counter-clockwise extreme points of a 2D point set, collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: List[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross2(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross2(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _collinear(coords: np.ndarray) -> bool:
    base = coords[0]
    far = coords[-1] - base
    w = coords - base
    d = coords.shape[1]
    for i in range(d):
        for j in range(i + 1, d):
            if np.any(far[i] * w[:, j] - far[j] * w[:, i] != 0):
                return False
    return True


def _reduce(normal: np.ndarray, offset: int) -> Facet:
    g = 0
    for v in list(normal) + [offset]:
        g = gcd(g, int(v))
    g = g or 1
    return tuple(int(v) // g for v in normal), int(offset) // g


def _facets_3d(coords: np.ndarray) -> Tuple[Tuple[Facet, ...], Tuple[Point, ...]]:
    """Outward integer facet planes of a full-dimensional 3D point set."""
    total = coords.sum(axis=0)
    count = len(coords)

    def oriented(i: int, j: int, k: int) -> Optional[Facet]:
        normal = np.cross(coords[j] - coords[i], coords[k] - coords[i])
        if not normal.any():
            return None
        offset = int(normal @ coords[i])
        # The centroid lies strictly inside, so it fixes the outward side.
        if int(normal @ total) > offset * count:
            normal, offset = -normal, -offset
        return _reduce(normal, offset)

    hull = ConvexHull(coords.astype(np.float64))
    facets = {f for f in (oriented(*s) for s in hull.simplices) if f is not None}
    vertices = coords[np.sort(hull.vertices)]
    if not _supports_all(facets, coords):
        # Qhull rounding slipped; fall back to exact enumeration over vertex triples.
        logger.warning("qhull facets failed exact verification, enumerating triples")
        facets = set()
        k = len(vertices)
        for i in range(k):
            for j in range(i + 1, k):
                for m in range(j + 1, k):
                    normal = np.cross(vertices[j] - vertices[i], vertices[m] - vertices[i])
                    if not normal.any():
                        continue
                    offset = int(normal @ vertices[i])
                    side = coords @ normal
                    if (side <= offset).all():
                        facets.add(_reduce(normal, offset))
                    elif (side >= offset).all():
                        facets.add(_reduce(-normal, -offset))
    verts = tuple(sorted(tuple(int(c) for c in v) for v in vertices))
    return tuple(sorted(facets)), verts


def _supports_all(facets, coords: np.ndarray) -> bool:
    return bool(facets) and all(((coords @ np.array(n)) <= off).all() for n, off in facets)


def convex_hull(region: Region) -> HullPolytope:
    """Minimal vertex representation of the closed convex hull of a region."""
    if not len(region):
        raise EmptyRegionError("convex hull of an empty region")
    d = region.d
    if d > MAX_HULL_DIMENSION:
        raise UnsupportedDimensionError(f"hulls are supported for d <= 3, got d={d}")
    points = region.points
    if len(points) == 1:
        return HullPolytope(d, "point", points)
    coords = region.coords()
    if _collinear(coords):
        # Canonical order walks a lattice line monotonically, so the ends are extremes.
        return HullPolytope(d, "segment", (points[0], points[-1]))
    if d == 2:
        return HullPolytope(2, "polygon", tuple(monotone_chain(points)))

    base = coords[0]
    rel = coords - base
    normal = None
    for row in rel[1:]:
        candidate = np.cross(rel[-1], row)
        if candidate.any():
            normal = candidate
            break
    if not (rel @ normal).any():
        plane = _reduce(normal, int(normal @ base))
        drop = int(np.argmax(np.abs(plane[0])))
        keep = [i for i in range(3) if i != drop]
        projected = {tuple(int(c) for c in p[keep]): tuple(int(c) for c in p) for p in coords}
        ring = monotone_chain(list(projected))
        return HullPolytope(3, "polygon", tuple(projected[q] for q in ring),
                            plane=plane, drop_axis=drop)

    try:
        facets, vertices = _facets_3d(coords)
    except QhullError as exc:
        raise InfeasibleError(f"qhull failed on a full-dimensional set: {exc}")
    return HullPolytope(3, "polyhedron", vertices, facets=facets)


def enumerate_hull_points(polytope: HullPolytope) -> np.ndarray:
    """All lattice points in the closed hull, found by bounding-box enumeration."""
    lo, hi = polytope.bounding_box()
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    box = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, polytope.d)
    return box[polytope.contains_many(box)]


def _scanline_count(vertices: Sequence[Point]) -> int:
    """Lattice points inside a CCW polygon, one integer row at a time."""
    rows = [v[0] for v in vertices]
    k = len(vertices)
    total = 0
    for r in range(min(rows), max(rows) + 1):
        lo = None
        hi = None
        for i in range(k):
            a = vertices[i]
            b = vertices[(i + 1) % k]
            if a[0] == b[0]:
                if a[0] != r:
                    continue
                first, last = min(a[1], b[1]), max(a[1], b[1])
            elif min(a[0], b[0]) <= r <= max(a[0], b[0]):
                num = a[1] * (b[0] - a[0]) + (r - a[0]) * (b[1] - a[1])
                den = b[0] - a[0]
                if den < 0:
                    num, den = -num, -den
                first, last = -((-num) // den), num // den
            else:
                continue
            lo = first if lo is None else min(lo, first)
            hi = last if hi is None else max(hi, last)
        if lo is not None and hi >= lo:
            total += hi - lo + 1
    return total


def count_lattice_points(polytope: HullPolytope) -> int:
    if polytope.kind == "point":
        return 1
    if polytope.kind == "segment":
        a, b = polytope.vertices
        g = 0
        for x, y in zip(a, b):
            g = gcd(g, abs(x - y))
        return g + 1
    if polytope.d == 2:
        return _scanline_count(polytope.vertices)
    return int(len(enumerate_hull_points(polytope)))


def hull_cardinality(region: Region) -> int:
    """|Co(R)|: lattice points inside or on the convex hull of R."""
    return count_lattice_points(convex_hull(region))


def hull_excess(region: Region) -> int:
    """|Co(R)| - |R|."""
    return hull_cardinality(region) - len(region)


def pick_count(vertices: Sequence[Point]) -> int:
    """Lattice points of a CCW lattice polygon by Pick's theorem (area + B/2 + 1)."""
    k = len(vertices)
    twice_area = 0
    boundary = 0
    for i in range(k):
        a = vertices[i]
        b = vertices[(i + 1) % k]
        twice_area += a[0] * b[1] - b[0] * a[1]
        boundary += gcd(abs(b[0] - a[0]), abs(b[1] - a[1]))
    return (abs(twice_area) + boundary) // 2 + 1


class HullTracker:
    """Maintains |Co(R)| for a region that only grows.

    Points that fall inside the current hull leave it unchanged; the hull is rebuilt
    from its own vertices plus the new outside points only when queried.
    """

    def __init__(self):
        self._polytope: Optional[HullPolytope] = None
        self._pending: List[Point] = []
        self._count = 0

    def add(self, point: Sequence[int]) -> None:
        point = tuple(int(c) for c in point)
        if self._polytope is not None and self._polytope.contains(point):
            return
        self._pending.append(point)

    def cardinality(self) -> int:
        if self._pending:
            support = list(self._polytope.vertices) if self._polytope else []
            self._polytope = convex_hull(Region(tuple(support + self._pending)))
            self._count = count_lattice_points(self._polytope)
            self._pending = []
        return self._count
