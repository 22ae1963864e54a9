"""Circular region segmentation: carve the most deviant cells into ball-shaped regions."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from modules.errors import InputError
from modules.lattice import Field, GridSpec, Region

logger = logging.getLogger(__name__)

# Membership test of a ball shape: (candidate coords, center, squared radius) -> mask.
BallShape = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def euclidean_ball(coords: np.ndarray, center: np.ndarray, radius_sq: float) -> np.ndarray:
    """Closed Euclidean ball; integer squared distances against the squared radius."""
    d2 = ((coords - center) ** 2).sum(axis=1)
    return d2 <= radius_sq


@dataclass(frozen=True, eq=False)
class CandidateOrder:
    """Valid cells sorted by |Y - mu0| descending, ties in canonical point order.

    perm indexes the field's valid cells (canonical order); points, values and key
    are already rearranged.
    """

    perm: np.ndarray
    points: np.ndarray
    values: np.ndarray
    key: np.ndarray
    mu0: float

    def __len__(self) -> int:
        return len(self.perm)


def sort_candidates(field: Field, mu0: float) -> CandidateOrder:
    valid_points = field.valid_points()
    valid_values = field.valid_values()
    deviation = np.abs(valid_values - mu0)
    # Stable sort keeps canonical order among equal deviations.
    perm = np.argsort(-deviation, kind="stable")
    return CandidateOrder(
        perm=perm,
        points=valid_points[perm],
        values=valid_values[perm],
        key=deviation[perm],
        mu0=mu0,
    )


def crs_radius_sq(grid: GridSpec, m: int) -> float:
    """Squared ball radius (n Gamma(d/2+1) / (m pi^(d/2)))^(2/d)."""
    if m < 1:
        raise InputError(f"m must be positive, got {m}")
    d = grid.d
    if d == 2:
        return grid.n / (m * math.pi)
    volume_radius = grid.n * math.gamma(d / 2 + 1) / (m * math.pi ** (d / 2))
    return volume_radius ** (2 / d)


def crs_radius(grid: GridSpec, m: int) -> float:
    return math.sqrt(crs_radius_sq(grid, m))


def ball(grid: GridSpec, center: Sequence[int], radius: float) -> Region:
    """Lattice points within `radius` of `center`, clipped to the grid."""
    if radius < 0:
        raise InputError("ball radius must be nonnegative")
    reach = int(math.floor(radius))
    c = np.asarray(center, dtype=np.int64)
    axes = [np.arange(max(1, ci - reach), min(n, ci + reach) + 1) for ci, n in zip(c, grid.dims)]
    box = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.d)
    return Region.from_array(box[euclidean_ball(box, c, radius * radius)])


def carve_balls(points: np.ndarray, radius_sq: float, shape: BallShape = euclidean_ball) -> np.ndarray:
    """Ball label of every candidate in sorted order.

    Ball k is centred at the first candidate not taken by balls 0..k-1 and takes
    every untaken candidate inside it. Carving a prefix of the candidates gives the
    same labels restricted to that prefix, which lets one carving serve all N.
    """
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    k = 0
    nxt = 0
    while True:
        while nxt < n and labels[nxt] >= 0:
            nxt += 1
        if nxt == n:
            break
        hit = (labels < 0) & shape(points, points[nxt], radius_sq)
        labels[hit] = k
        k += 1
    return labels


def select_kept(sizes: Sequence[int], m: int, xi: float) -> List[int]:
    """Balls, in carving order, whose size reaches xi; at most m of them."""
    kept = []
    for b, size in enumerate(sizes):
        if size >= xi:
            kept.append(b)
            if len(kept) == m:
                break
    return kept


def crs(order: CandidateOrder, N: int, m: int, xi: float, grid: GridSpec,
        shape: BallShape = euclidean_ball) -> List[Region]:
    """Carve the first N candidates into at most m regions of size >= xi.

    Balls whose size falls below xi are discarded for good: their points go back to
    the baseline and are never offered to a later ball.
    """
    if not 1 <= N <= len(order):
        raise InputError(f"N must lie in [1, {len(order)}], got {N}")
    if m < 1:
        raise InputError(f"m must be positive, got {m}")
    points = order.points[:N]
    labels = carve_balls(points, crs_radius_sq(grid, m), shape)
    sizes = np.bincount(labels)
    kept = select_kept(sizes.tolist(), m, xi)
    logger.debug("crs N=%d m=%d: %d balls carved, %d kept", N, m, len(sizes), len(kept))
    return [Region.from_array(points[labels == b]) for b in kept]
