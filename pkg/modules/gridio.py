"""Grid, stack, region and result file formats.

Grid CSV layout::

    dims: n1 n2 [n3]
    mask: <sentinel>          (optional)
    v,v,v,...                 (row-major, one line per last-axis row)

Cells equal to the sentinel, and NaN cells, are masked. The binary alternate
(`.bin`) carries the same header, a `data:` line, then little-endian float64 values.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from modules.errors import GridParseError
from modules.lattice import Field, GridSpec, Region
from modules.preprocess import RasterStack

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_SENTINEL = "nan"
RESULT_DIGITS = 9


def _parse_header(lines: List[str]) -> Tuple[GridSpec, Optional[str], int]:
    """Returns the grid, the mask sentinel and the number of header lines consumed."""
    if not lines or not lines[0].strip().startswith("dims:"):
        raise GridParseError("expected a 'dims: n1 n2 [n3]' header", 1)
    try:
        dims = tuple(int(tok) for tok in lines[0].split(":", 1)[1].split())
    except ValueError:
        raise GridParseError(f"malformed dims header {lines[0].strip()!r}", 1)
    if not 1 <= len(dims) <= 3 or any(v < 1 for v in dims):
        raise GridParseError(f"dims must be 1 to 3 positive integers, got {dims}", 1)
    sentinel = None
    used = 1
    if len(lines) > 1 and lines[1].strip().startswith("mask:"):
        sentinel = lines[1].split(":", 1)[1].strip()
        if not sentinel:
            raise GridParseError("empty mask sentinel", 2)
        used = 2
    return GridSpec(dims), sentinel, used


def _sentinel_hits(tokens: pd.Series, numbers: pd.Series, sentinel: Optional[str]) -> pd.Series:
    hits = numbers.isna() & tokens.str.lower().isin(["nan"])
    if sentinel is None:
        return hits
    hits |= tokens == sentinel
    try:
        value = float(sentinel)
    except ValueError:
        return hits
    if not math.isnan(value):
        hits |= numbers == value
    return hits


def _to_float(token: str) -> float:
    try:
        return float(token)
    except ValueError:
        return math.nan


def _parse_values(body: List[Tuple[int, str]], grid: GridSpec, sentinel: Optional[str]) -> Tuple[np.ndarray, np.ndarray]:
    """Values and validity mask from numbered body lines.

    Tokens go through `float` one by one, so 17-digit output parses back to the same doubles.
    """
    cells = pd.DataFrame(
        [(line_no, token.strip()) for line_no, line in body for token in line.split(",")],
        columns=["line", "token"],
    )
    if len(cells) != grid.n:
        deficit = grid.n - len(cells)
        what = f"{deficit} missing" if deficit > 0 else f"{-deficit} extra"
        raise GridParseError(f"dims {' '.join(map(str, grid.dims))} need {grid.n} values, found {len(cells)} ({what})")
    tokens = cells["token"].astype(str)
    numbers = tokens.map(_to_float).astype(np.float64)
    masked = _sentinel_hits(tokens, numbers, sentinel)
    bad = numbers.isna() & ~masked
    if bad.any():
        first = cells[bad].iloc[0]
        raise GridParseError(f"non-numeric cell {first['token']!r}", int(first["line"]))
    values = numbers.to_numpy(dtype=np.float64).reshape(grid.dims)
    valid = (~masked).to_numpy().reshape(grid.dims)
    values = np.where(valid, values, np.nan)
    return values, valid


def _field_from(grid: GridSpec, values: np.ndarray, valid: np.ndarray) -> Field:
    return Field(grid, values, None if valid.all() else valid)


def parse_grid_text(text: str) -> Field:
    lines = text.splitlines()
    grid, sentinel, used = _parse_header(lines)
    body = [(i + 1, line) for i, line in enumerate(lines) if i >= used and line.strip()]
    values, valid = _parse_values(body, grid, sentinel)
    return _field_from(grid, values, valid)


def _header(field: Field, sentinel: Optional[str]) -> str:
    header = "dims: " + " ".join(str(v) for v in field.grid.dims) + "\n"
    if field.mask is not None:
        header += f"mask: {sentinel or DEFAULT_SENTINEL}\n"
    return header


def _rows(values: np.ndarray, valid: np.ndarray, sentinel: str) -> str:
    width = values.shape[-1]
    frame = pd.DataFrame(np.where(valid, values, np.nan).reshape(-1, width))
    return frame.to_csv(header=False, index=False, float_format="%.17g", na_rep=sentinel,
                        lineterminator="\n")


def format_grid_text(field: Field, sentinel: Optional[str] = None) -> str:
    """CSV text with 17 significant digits, so parsing it gives back the same values."""
    return _header(field, sentinel) + _rows(field.values, field.valid_mask(), sentinel or DEFAULT_SENTINEL)


def _parse_binary(raw: bytes) -> Field:
    marker = b"data:\n"
    cut = raw.find(marker)
    if cut < 0:
        raise GridParseError("binary grid lacks a 'data:' line")
    lines = raw[:cut].decode("utf-8").splitlines()
    grid, sentinel, _ = _parse_header(lines)
    payload = raw[cut + len(marker):]
    if len(payload) != 8 * grid.n:
        raise GridParseError(f"binary grid needs {grid.n} float64 values, found {len(payload) / 8:g}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(grid.dims)
    valid = ~np.isnan(values)
    if sentinel is not None:
        try:
            valid &= values != float(sentinel)
        except ValueError:
            pass
    return _field_from(grid, np.where(valid, values, np.nan), valid)


def load_grid(path: PathLike) -> Field:
    path = Path(path)
    if path.suffix == ".bin":
        field = _parse_binary(path.read_bytes())
    else:
        field = parse_grid_text(path.read_text())
    logger.info("loaded %s: dims %s, %d valid cells", path, field.grid.dims, field.n_valid)
    return field


def save_grid(path: PathLike, field: Field, sentinel: Optional[str] = None) -> None:
    path = Path(path)
    if path.suffix == ".bin":
        header = _header(field, "nan" if field.mask is not None else None) + "data:\n"
        values = np.where(field.valid_mask(), field.values, np.nan).astype("<f8")
        path.write_bytes(header.encode("utf-8") + values.tobytes())
        return
    path.write_text(format_grid_text(field, sentinel))


# --- raster stacks ----------------------------------------------------------------


def parse_stack_text(text: str) -> RasterStack:
    """Grid header, then one `time: <timestamp>` block per slice."""
    lines = text.splitlines()
    grid, sentinel, used = _parse_header(lines)
    blocks: List[Tuple[int, str, List[Tuple[int, str]]]] = []
    for i in range(used, len(lines)):
        line = lines[i].strip()
        if not line:
            continue
        if line.startswith("time:"):
            blocks.append((i + 1, line.split(":", 1)[1].strip(), []))
        elif not blocks:
            raise GridParseError("values before the first 'time:' line", i + 1)
        else:
            blocks[-1][2].append((i + 1, lines[i]))
    if not blocks:
        raise GridParseError("stack has no 'time:' blocks")
    slices = []
    valid = np.ones(grid.dims, dtype=bool)
    stamps = []
    for line_no, stamp, body in blocks:
        try:
            stamps.append(pd.Timestamp(stamp))
        except ValueError:
            raise GridParseError(f"bad timestamp {stamp!r}", line_no)
        if not body:
            raise GridParseError(f"slice {stamp} has no values", line_no)
        values, slice_valid = _parse_values(body, grid, sentinel)
        slices.append(values)
        valid &= slice_valid
    mask = None if valid.all() else valid
    return RasterStack(np.stack(slices), pd.DatetimeIndex(stamps), mask)


def format_stack_text(stack: RasterStack, sentinel: Optional[str] = None) -> str:
    grid = stack.grid
    header = "dims: " + " ".join(str(v) for v in grid.dims) + "\n"
    if stack.mask is not None:
        header += f"mask: {sentinel or DEFAULT_SENTINEL}\n"
    valid = stack.valid_mask()
    parts = [header]
    for stamp, values in zip(stack.timestamps, stack.slices):
        parts.append(f"time: {stamp.isoformat()}\n")
        parts.append(_rows(values, valid, sentinel or DEFAULT_SENTINEL))
    return "".join(parts)


def load_stack(path: PathLike) -> RasterStack:
    return parse_stack_text(Path(path).read_text())


def save_stack(path: PathLike, stack: RasterStack) -> None:
    Path(path).write_text(format_stack_text(stack))


# --- JSON -------------------------------------------------------------------------


def round_floats(value: Any, digits: int = RESULT_DIGITS) -> Any:
    """Round every float in a JSON-like tree to `digits` significant digits."""
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    return value


def dumps_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True, exclude_none=True)
    return json.dumps(round_floats(payload), indent=2) + "\n"


def save_json(path: PathLike, payload: Any) -> None:
    Path(path).write_text(dumps_json(payload))


def save_result(path: PathLike, result: BaseModel) -> None:
    """DetectionResult as JSON, floats at 9 significant digits, fields in model order."""
    save_json(path, result)


def load_region(path: PathLike) -> Region:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GridParseError(f"region file is not JSON: {exc.msg}", exc.lineno)
    if not isinstance(payload, dict) or not isinstance(payload.get("points"), list):
        raise GridParseError("region JSON needs a 'points' list")
    try:
        return Region.from_json_dict(payload)
    except (TypeError, ValueError) as exc:
        raise GridParseError(f"bad region points: {exc}")
