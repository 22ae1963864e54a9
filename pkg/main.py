from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ValidationError
from typing import List, Optional
import logging
import numpy as np

from modules.detector import DetectionResult, DetectorConfig, run_detection
from modules.errors import DplsError, InfeasibleError, InputError
from modules.gridio import parse_grid_text
from modules.hull import convex_hull, count_lattice_points
from modules.lattice import Field, Region

logger = logging.getLogger(__name__)

app = FastAPI(title="Lattice Anomaly Detection API")

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class DetectRequest(BaseModel):
    values: List  # nested lists, one level per grid axis; null marks a masked cell
    config: DetectorConfig = DetectorConfig()


class RegionRequest(BaseModel):
    points: List[List[int]]


class HullResponse(BaseModel):
    kind: str
    vertices: List[List[int]]
    cardinality: int
    excess: int


def field_from_nested(values: list) -> Field:
    """Build a Field from nested lists, treating None as masked."""
    try:
        raw = np.array(values, dtype=object)
    except ValueError:
        raise InputError("values must form a rectangular array")
    if raw.ndim < 1 or raw.ndim > 3 or raw.size == 0:
        raise InputError(f"values must be a nonempty 1D to 3D array, got shape {raw.shape}")
    mask = np.vectorize(lambda v: v is not None, otypes=[bool])(raw)
    try:
        numbers = np.where(mask, raw, np.nan).astype(np.float64)
    except (TypeError, ValueError):
        raise InputError("values must be numbers or null")
    mask &= np.isfinite(numbers)
    return Field.from_array(numbers, None if mask.all() else mask)


def to_http_error(exc: DplsError) -> HTTPException:
    """Map library errors onto status codes."""
    if isinstance(exc, InfeasibleError):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=400, detail=str(exc))


@app.get("/")
async def root():
    return {"message": "Lattice Anomaly Detection API"}


@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.post("/detect", response_model=DetectionResult)
def detect_json(request: DetectRequest):
    try:
        field = field_from_nested(request.values)
        return run_detection(field, request.config)
    except DplsError as e:
        raise to_http_error(e)


@app.post("/detect-file", response_model=DetectionResult)
def detect_file(file: UploadFile = File(...), config: Optional[str] = Form(None)):
    try:
        detector_config = DetectorConfig() if config is None else DetectorConfig.model_validate_json(config)
    except ValidationError as e:
        raise HTTPException(status_code=400, detail=f"invalid config: {e}")
    try:
        text = file.file.read().decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="grid file must be UTF-8 text")
    try:
        field = parse_grid_text(text)
        logger.info("detect-file %s: dims %s", file.filename, field.grid.dims)
        return run_detection(field, detector_config)
    except DplsError as e:
        raise to_http_error(e)


@app.post("/hull", response_model=HullResponse)
def hull(request: RegionRequest):
    try:
        region = Region(tuple(tuple(p) for p in request.points))
        polytope = convex_hull(region)
        count = count_lattice_points(polytope)
    except DplsError as e:
        raise to_http_error(e)
    return HullResponse(
        kind=polytope.kind,
        vertices=[list(v) for v in polytope.vertices],
        cardinality=count,
        excess=count - len(region),
    )
