"""8-bit grayscale heatmaps (binary PGM) of fields and detection frequencies."""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from modules.errors import InputError

logger = logging.getLogger(__name__)


def _as_image(values: np.ndarray) -> np.ndarray:
    """2D images pass through; 3D volumes are tiled slice by slice along the columns."""
    if values.ndim == 1:
        return values[None, :]
    if values.ndim == 2:
        return values
    if values.ndim == 3:
        return np.concatenate(list(values), axis=1)
    raise InputError(f"cannot draw a {values.ndim}D array")


def scale_to_bytes(values: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None,
                   mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Linear map of [lo, hi] onto 0..255; masked and non-finite cells become 0."""
    values = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(values)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    if lo is None:
        lo = float(values[valid].min()) if valid.any() else 0.0
    if hi is None:
        hi = float(values[valid].max()) if valid.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.where(valid, values, lo) - lo) / span, 0.0, 1.0)
    return np.where(valid, np.rint(scaled * 255), 0).astype(np.uint8)


def write_pgm(path: Union[str, Path], pixels: np.ndarray) -> None:
    image = Image.fromarray(_as_image(np.asarray(pixels, dtype=np.uint8)), mode="L")
    image.save(path, format="PPM")  # mode L is written as binary P5
    logger.info("wrote %dx%d heatmap to %s", image.width, image.height, path)


def frequency_heatmap(path: Union[str, Path], freq: np.ndarray, B: int) -> None:
    """Detection counts out of B replicates; white means flagged every time."""
    write_pgm(path, scale_to_bytes(freq, 0.0, float(B)))


def field_heatmap(path: Union[str, Path], values: np.ndarray, mask: Optional[np.ndarray] = None) -> None:
    write_pgm(path, scale_to_bytes(values, mask=mask))
