"""Raster-stack operations that turn a time series of grids into one detection field."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from modules.errors import GridMismatchError, InputError
from modules.lattice import Field, GridSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RasterStack:
    """T slices of one grid, shape (T, *dims), with a timestamp per slice."""

    slices: np.ndarray
    timestamps: pd.DatetimeIndex
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        slices = np.asarray(self.slices, dtype=np.float64)
        if slices.ndim < 2:
            raise GridMismatchError("a stack needs a time axis plus at least one grid axis")
        stamps = pd.DatetimeIndex(self.timestamps)
        if len(stamps) != slices.shape[0]:
            raise GridMismatchError(f"{slices.shape[0]} slices but {len(stamps)} timestamps")
        if self.mask is not None and np.shape(self.mask) != slices.shape[1:]:
            raise GridMismatchError("mask shape does not match the slices")
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "timestamps", stamps)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.slices.shape[1:])

    @property
    def T(self) -> int:
        return self.slices.shape[0]

    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.slices.shape[1:], dtype=bool)
        return np.asarray(self.mask, dtype=bool)

    def _cells(self) -> np.ndarray:
        """(T, K) matrix of the valid cells."""
        return self.slices.reshape(self.T, -1)[:, self.valid_mask().ravel()]

    def _with_cells(self, cells: np.ndarray) -> "RasterStack":
        out = np.full(self.slices.shape, np.nan).reshape(self.T, -1)
        out[:, self.valid_mask().ravel()] = cells
        return RasterStack(out.reshape(self.slices.shape), self.timestamps, self.mask)


def detrend_linear(stack: RasterStack) -> RasterStack:
    """Remove each cell's least-squares line over time (time measured in days)."""
    if stack.T < 3:
        raise InputError(f"linear detrending needs at least 3 slices, got {stack.T}")
    cells = stack._cells()
    if np.isnan(cells).any():
        raise InputError("unmasked cells contain missing values; mask them before detrending")
    days = ((stack.timestamps - stack.timestamps[0]) / pd.Timedelta(days=1)).to_numpy(dtype=np.float64)
    slope, intercept = np.polyfit(days, cells, 1)
    trend = np.outer(days, slope) + intercept
    logger.info("detrended %d cells over %d slices; mean slope %.4g per day", cells.shape[1], stack.T,
                float(np.mean(slope)) if slope.size else 0.0)
    return stack._with_cells(cells - trend)


def max_composite(stack: RasterStack, window: str = "M") -> Field:
    """Per cell: average within each time window, then the maximum over windows.

    `window` is a pandas frequency: calendar month by default, or a fixed length
    such as "30D".
    """
    try:
        offset = pd.tseries.frequencies.to_offset(window)
    except ValueError:
        raise InputError(f"window {window!r} is not a pandas frequency")
    frame = pd.DataFrame(stack._cells(), index=stack.timestamps)
    means = frame.groupby(pd.Grouper(freq=offset)).mean().dropna(how="all")
    if means.empty:
        raise InputError(f"no {window!r} window holds any slice")
    composite = np.full(stack.grid.n, np.nan)
    composite[stack.valid_mask().ravel()] = means.max(axis=0).to_numpy()
    logger.info("max composite over %d windows of %r", len(means), window)
    return Field(stack.grid, composite.reshape(stack.grid.dims), stack.mask)
