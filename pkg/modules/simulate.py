"""Synthetic anomaly layouts and noisy fields drawn on top of them.

Layouts are parameterised reconstructions of the benchmark shapes: five squares;
an ellipse, a disc with holes and a two-piece region; a slotted disc (U shape) and
a two-piece region; and a 3D holed ball with a two-piece region. Every shape is
built from exactly the requested number of cells and placed by its bounding box,
flush with the grid edges or centred, so gaps between anomalies grow with the grid.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, PositiveFloat, PositiveInt
from scipy.linalg import LinAlgError, cholesky
from scipy.spatial.distance import cdist

from modules.crs import crs_radius_sq
from modules.errors import FactorisationError, InfeasibleSettingError
from modules.lattice import (
    Field,
    GridSpec,
    Partition,
    Region,
    in_smooth_class,
    intrinsic_diameter,
    region_distance,
)

logger = logging.getLogger(__name__)

MAX_DENSE_CELLS = 4096
REGULARISATION = 1e-10
JITTER_ATTEMPTS = 50

Offset = Tuple[int, ...]
KeyFn = Callable[[np.ndarray], np.ndarray]
DropFn = Callable[[np.ndarray], np.ndarray]
ShapeFn = Callable[[int], List[Offset]]


class SimSetting(BaseModel):
    """One simulation scenario. `delta` is the smallest mean shift Δ, `total_area` the target |R|."""

    setting_id: Literal["1", "2", "3", "three_d"] = "1"
    dims: Tuple[PositiveInt, ...] = (50, 50)
    delta: PositiveFloat = 3.0
    total_area: PositiveInt = 500
    sigma: NonNegativeFloat = 1.0
    jitter_prob: float = pydantic.Field(0.25, ge=0.0, lt=1.0)
    zeta: Optional[PositiveFloat] = None
    seed: int = 0
    separation: NonNegativeFloat = 2.0
    K: PositiveInt = 8

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dims)


class GroundTruth(BaseModel):
    """True partition and means; means[0] is the baseline mean, means[j] belongs to anomaly j."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dims: Tuple[int, ...]
    partition: Partition
    means: List[float]
    delta_min: int
    m_star: int

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dims)

    @property
    def regions(self) -> List[Region]:
        return list(self.partition.anomalies)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator, reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


# --- shape builders ---------------------------------------------------------------


def _nearest_offsets(area: int, d: int, key: KeyFn, drop: Optional[DropFn] = None) -> List[Offset]:
    """The `area` offsets with the smallest key, ties in lexicographic order.

    Offsets flagged by `drop` are skipped.
    """
    reach = max(2, int(math.ceil(area ** (1.0 / d))))
    while True:
        box = np.indices((2 * reach + 1,) * d).reshape(d, -1).T - reach
        keys = key(box)
        allowed = ~drop(box) if drop is not None else np.ones(len(box), dtype=bool)
        order = np.lexsort(tuple(box[:, i] for i in reversed(range(d))) + (keys,))
        order = order[allowed[order]]
        # The whole key level set up to the cutoff must fit strictly inside the box.
        on_rim = (np.abs(box) == reach).any(axis=1)
        if len(order) >= area and keys[on_rim].min() > keys[order[area - 1]]:
            return [tuple(int(c) for c in box[idx]) for idx in order[:area]]
        reach *= 2


def _radial(box: np.ndarray) -> np.ndarray:
    return (box ** 2).sum(axis=1)


def _chebyshev(box: np.ndarray) -> np.ndarray:
    return np.abs(box).max(axis=1)


def square_offsets(area: int) -> List[Offset]:
    side = math.isqrt(area)
    if side * side == area:
        lo = -(side // 2)
        return [(i, j) for i in range(lo, lo + side) for j in range(lo, lo + side)]
    return _nearest_offsets(area, 2, _chebyshev)


def ellipse_offsets(area: int) -> List[Offset]:
    # Semi-axes in ratio 3:2, long axis along the columns.
    return _nearest_offsets(area, 2, lambda b: 9 * b[:, 0] ** 2 + 4 * b[:, 1] ** 2)


def _hole_cells(area: int, d: int) -> np.ndarray:
    if area < 10:
        return np.zeros((0, d), dtype=np.int64)
    radius = (area * math.gamma(d / 2 + 1) / math.pi ** (d / 2)) ** (1.0 / d)
    h = max(1, int(round(radius / 2)))
    return np.concatenate([h * np.eye(d, dtype=np.int64), -h * np.eye(d, dtype=np.int64)])


def holed_ball_offsets(area: int, d: int = 2) -> List[Offset]:
    """Disc (ball) filled outward from the centre, leaving single-cell holes on the axes."""
    holes = _hole_cells(area, d)
    return _nearest_offsets(area, d, _radial,
                            drop=lambda b: (b[:, None, :] == holes[None]).all(axis=2).any(axis=1))


def pair_offsets(area: int, d: int = 2) -> List[Offset]:
    """Disc (ball) with its central slab across the last axis removed: two halves, two apart."""
    return _nearest_offsets(area, d, _radial, drop=lambda b: b[:, -1] == 0)


def u_offsets(area: int) -> List[Offset]:
    """Disc with a slot cut from the centre down through the rim.

    The slot is three columns wide from 30 cells on, one column below that.
    """
    w = 1 if area >= 30 else 0
    return _nearest_offsets(area, 2, _radial, drop=lambda b: (np.abs(b[:, 1]) <= w) & (b[:, 0] >= 0))


# --- layouts ----------------------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    """One anomaly of a layout.

    `anchor` places the shape's bounding box per axis: 0 flush with the low edge,
    1 flush with the high edge, 0.5 centred. `weight` is its share of the total area.
    """

    shape: ShapeFn
    anchor: Tuple[float, ...]
    weight: float
    mean_mult: float


def _layout(setting_id: str) -> List[Slot]:
    if setting_id == "1":
        # Equal means sit in opposite corners.
        return [
            Slot(square_offsets, (0, 0), 1, 3.0),
            Slot(square_offsets, (0, 1), 1, 2.0),
            Slot(square_offsets, (1, 0), 1, 2.0),
            Slot(square_offsets, (1, 1), 1, 3.0),
            Slot(square_offsets, (0.5, 0.5), 1, 1.0),
        ]
    if setting_id == "2":
        return [
            Slot(ellipse_offsets, (0, 0), 2, 1.0),
            Slot(holed_ball_offsets, (0, 1), 3, 2.0),
            Slot(pair_offsets, (1, 0.5), 3, 3.0),
        ]
    if setting_id == "3":
        return [
            Slot(u_offsets, (0, 0), 1, 1.0),
            Slot(pair_offsets, (1, 1), 1, 1.0),
        ]
    return [
        Slot(lambda a: holed_ball_offsets(a, 3), (0, 0, 0), 1, 1.0),
        Slot(lambda a: pair_offsets(a, 3), (1, 1, 1), 1, 1.0),
    ]


def split_area(total: int, weights: Sequence[float]) -> List[int]:
    """Shares proportional to `weights`, rounded down; the last part takes the remainder."""
    scale = total / float(sum(weights))
    shares = [int(math.floor(w * scale)) for w in weights[:-1]]
    return shares + [total - sum(shares)]


def _centre(grid: GridSpec, anchor: Sequence[float], offsets: Sequence[Offset]) -> Tuple[int, ...]:
    """Centre that puts the offsets' bounding box at `anchor` within the grid."""
    box = np.asarray(offsets)
    lo, hi = box.min(axis=0), box.max(axis=0)
    return tuple(
        1 + int(math.floor((n - (top - low + 1)) * a)) - int(low)
        for n, a, low, top in zip(grid.dims, anchor, lo, hi)
    )


def _place(grid: GridSpec, centre: Sequence[int], offsets: Sequence[Offset]) -> Region:
    region = Region(tuple(tuple(c + o for c, o in zip(centre, off)) for off in offsets))
    for p in region:
        if not grid.contains(p):
            raise InfeasibleSettingError(
                f"anomaly of {len(offsets)} cells does not fit grid {grid.dims}"
            )
    return region


def _layout_problem(regions: Sequence[Region], setting: SimSetting) -> Optional[str]:
    for i, a in enumerate(regions):
        if not in_smooth_class(a, setting.K):
            return f"anomaly {i + 1} is outside the smooth class K={setting.K}"
        for j in range(i + 1, len(regions)):
            dist = region_distance(a, regions[j])
            if dist < setting.separation:
                return f"anomalies {i + 1} and {j + 1} are {dist:.3g} apart (< {setting.separation})"
    return None


@dataclass(frozen=True)
class BallGeometry:
    """How a layout sits against the search balls carved with m = m* regions.

    `fits[i]`: anomaly i has diameter within the ball radius, so a ball centred on
    any of its cells covers it. `apart`: index pairs farther apart than the radius.
    """

    radius_sq: float
    fits: Tuple[bool, ...]
    apart: FrozenSet[Tuple[int, int]]

    @classmethod
    def of(cls, regions: Sequence[Region], radius_sq: float) -> "BallGeometry":
        fits = tuple(intrinsic_diameter(r) ** 2 <= radius_sq for r in regions)
        apart = frozenset(
            (i, j)
            for i in range(len(regions))
            for j in range(i + 1, len(regions))
            if region_distance(regions[i], regions[j]) ** 2 > radius_sq
        )
        return cls(radius_sq, fits, apart)

    def kept_by(self, other: "BallGeometry") -> bool:
        return all(b or not a for a, b in zip(self.fits, other.fits)) and self.apart <= other.apart

    def growth_filter(self, i: int, regions: Sequence[Region]) -> Callable[[np.ndarray], np.ndarray]:
        """Outer cells anomaly i may grow into without breaking its fit or its gaps."""
        own = regions[i].coords()
        far = [regions[k].coords() for k in range(len(regions)) if tuple(sorted((i, k))) in self.apart]

        def admissible(cand: np.ndarray) -> np.ndarray:
            ok = np.ones(len(cand), dtype=bool)
            if self.fits[i]:
                ok &= cdist(cand, own, "sqeuclidean").max(axis=1) <= self.radius_sq
            for other in far:
                ok &= cdist(cand, other, "sqeuclidean").min(axis=1) > self.radius_sq
            return ok

        return admissible


def _neighbours(point: Sequence[int]) -> List[Tuple[int, ...]]:
    out = []
    for axis in range(len(point)):
        for step in (-1, 1):
            q = list(point)
            q[axis] += step
            out.append(tuple(q))
    return out


def jitter_region(region: Region, grid: GridSpec, prob: float, rng: np.random.Generator,
                  blocked: frozenset = frozenset(),
                  admissible: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> Region:
    """Drop inner-boundary cells with probability `prob`, then grow as many outer ones.

    Only outer cells passing `admissible` are grown; when too few pass, fewer cells
    are dropped so the area never changes.
    """
    cells = region.as_set()
    inner = [p for p in region if any(q not in cells for q in _neighbours(p))]
    drops = rng.random(len(inner)) < prob
    removed = [p for p, hit in zip(inner, drops) if hit]
    if not removed:
        return region
    outer = sorted({
        q for p in region for q in _neighbours(p)
        if q not in cells and grid.contains(q) and q not in blocked
    })
    if admissible is not None and outer:
        passed = admissible(np.asarray(outer, dtype=np.int64))
        outer = [q for q, ok in zip(outer, passed) if ok]
    take = min(len(removed), len(outer))
    if not take:
        return region
    if take < len(removed):
        removed = [removed[i] for i in sorted(int(i) for i in rng.choice(len(removed), size=take, replace=False))]
    picks = rng.choice(len(outer), size=take, replace=False)
    added = [outer[i] for i in sorted(int(i) for i in picks)]
    gone = set(removed)
    return Region(tuple(p for p in region if p not in gone) + tuple(added))


def make_truth(setting: SimSetting) -> GroundTruth:
    """Place the setting's anomalies; layouts with jitter depend on the seed.

    Jitter never breaks what the plain layout offers the search balls at m*: an
    anomaly that fits one ball keeps fitting, and anomalies farther apart than the
    ball radius stay that far apart.
    """
    grid = setting.grid
    expected_d = 3 if setting.setting_id == "three_d" else 2
    if grid.d != expected_d:
        raise InfeasibleSettingError(
            f"setting {setting.setting_id} needs a {expected_d}D grid, got dims {grid.dims}"
        )
    if setting.total_area >= grid.n:
        raise InfeasibleSettingError(f"total area {setting.total_area} must be below n={grid.n}")

    layout = _layout(setting.setting_id)
    areas = split_area(setting.total_area, [slot.weight for slot in layout])
    if min(areas) < 1:
        raise InfeasibleSettingError(f"total area {setting.total_area} is too small for {len(layout)} anomalies")
    regions = []
    for slot, area in zip(layout, areas):
        offsets = slot.shape(area)
        regions.append(_place(grid, _centre(grid, slot.anchor, offsets), offsets))
    problem = _layout_problem(regions, setting)
    if problem:
        raise InfeasibleSettingError(problem)
    geometry = BallGeometry.of(regions, crs_radius_sq(grid, len(regions)))
    logger.debug("anomalies fitting one search ball: %s; pairs beyond its radius: %s",
                 geometry.fits, sorted(geometry.apart))

    if setting.setting_id != "1" and setting.jitter_prob > 0:
        rng = make_rng(setting.seed)
        for attempt in range(JITTER_ATTEMPTS):
            jittered: List[Region] = []
            for i, region in enumerate(regions):
                # Earlier anomalies are blocked in their jittered form, later ones as placed.
                current = jittered + regions[i:]
                others = frozenset().union(*(r.as_set() for k, r in enumerate(current) if k != i))
                admissible = geometry.growth_filter(i, current)
                jittered.append(jitter_region(region, grid, setting.jitter_prob, rng, others, admissible))
            if (_layout_problem(jittered, setting) is None
                    and geometry.kept_by(BallGeometry.of(jittered, geometry.radius_sq))):
                regions = jittered
                break
            logger.debug("jitter attempt %d rejected", attempt + 1)
        else:
            logger.warning("no admissible jitter after %d attempts; using the plain layout", JITTER_ATTEMPTS)

    mask_field = Field(grid, np.zeros(grid.dims))
    partition = Partition.from_anomalies(mask_field, regions)
    means = [0.0] + [setting.delta * slot.mean_mult for slot in layout]
    logger.info("setting %s: %d anomalies, areas %s", setting.setting_id, len(regions),
                [len(r) for r in regions])
    return GroundTruth(
        dims=grid.dims,
        partition=partition,
        means=means,
        delta_min=min(len(r) for r in regions),
        m_star=len(regions),
    )


def mean_surface(truth: GroundTruth) -> np.ndarray:
    surface = np.full(truth.dims, truth.means[0], dtype=np.float64)
    for region, mu in zip(truth.partition.anomalies, truth.means[1:]):
        surface[tuple((region.coords() - 1).T)] = mu
    return surface


def anomaly_mask(truth: GroundTruth) -> np.ndarray:
    mask = np.zeros(truth.dims, dtype=bool)
    for region in truth.partition.anomalies:
        mask[tuple((region.coords() - 1).T)] = True
    return mask


def sample_field(truth: GroundTruth, sigma: float, seed: int) -> Field:
    """Y = mean surface + sigma * iid N(0, 1), drawn in canonical cell order."""
    rng = make_rng(seed)
    noise = rng.standard_normal(truth.grid.n).reshape(truth.dims)
    return Field(truth.grid, mean_surface(truth) + sigma * noise)


def exponential_covariance_factor(grid: GridSpec, zeta: float) -> np.ndarray:
    """Lower Cholesky factor of exp(-zeta * dist) over the grid cells."""
    if grid.n > MAX_DENSE_CELLS:
        raise InfeasibleSettingError(
            f"dense covariance needs n <= {MAX_DENSE_CELLS}, got n={grid.n}"
        )
    coords = grid.points().astype(np.float64)
    cov = np.exp(-zeta * cdist(coords, coords))
    try:
        return cholesky(cov, lower=True)
    except LinAlgError:
        logger.debug("covariance not positive definite, adding %.0e to the diagonal", REGULARISATION)
    try:
        return cholesky(cov + REGULARISATION * np.eye(grid.n), lower=True)
    except LinAlgError as exc:
        raise FactorisationError(f"covariance factorisation failed for zeta={zeta}: {exc}")


def sample_dependent_field(truth: GroundTruth, sigma: float, zeta: float, seed: int,
                           factor: Optional[np.ndarray] = None) -> Field:
    """Y = mean surface + sigma * L z with L L^T = exp(-zeta * dist).

    A precomputed `factor` may be passed to reuse one factorisation across replicates.
    """
    if factor is None:
        factor = exponential_covariance_factor(truth.grid, zeta)
    rng = make_rng(seed)
    z = rng.standard_normal(truth.grid.n)
    noise = (factor @ z).reshape(truth.dims)
    return Field(truth.grid, mean_surface(truth) + sigma * noise)


def sample_truth_field(truth: GroundTruth, setting: SimSetting, seed: int,
                       factor: Optional[np.ndarray] = None) -> Field:
    """Independent errors unless the setting carries a correlation decay zeta."""
    if setting.zeta is None:
        return sample_field(truth, setting.sigma, seed)
    return sample_dependent_field(truth, setting.sigma, setting.zeta, seed, factor)


def settings_summary(truth: GroundTruth) -> Dict[str, object]:
    return {
        "m_star": truth.m_star,
        "areas": [len(r) for r in truth.partition.anomalies],
        "means": truth.means,
        "delta_min": truth.delta_min,
    }
