"""Configuration for the ALE FSI solver."""

import os
from pathlib import Path


# Data directory for caches and default outputs
DATA_DIR = Path(os.environ.get("ALE_FSI_DATA_DIR", Path(__file__).parent.parent.parent / "data"))
DB_PATH = DATA_DIR / "background.db"
OUTPUT_DIR = DATA_DIR / "runs"

# Logging level name, e.g. INFO or DEBUG
LOG_LEVEL: str = os.environ.get("ALE_FSI_LOG_LEVEL", "INFO").upper()

# Worker threads for element assembly (results do not depend on this value)
THREADS: int = int(os.environ.get("ALE_FSI_THREADS", "1"))

# Elements per assembly chunk
ASSEMBLY_CHUNK: int = int(os.environ.get("ALE_FSI_ASSEMBLY_CHUNK", "2048"))

# Quadrature exactness on the reference triangle
QUADRATURE_DEGREE = 6

# Mesh generation
MIN_ANGLE_DEG = 20.0
MAX_REFINEMENT_ROUNDS = 12
CLAMP_TOLERANCE = 1e-8  # relative to bounding-box diagonal
BARYCENTRIC_TOLERANCE = 1e-8

# Newton defaults
NEWTON_ABS_TOL = 1e-10
NEWTON_REL_TOL = 1e-8
NEWTON_STEP_TOL = 1e-12
NEWTON_MAX_ITER = 20
LINE_SEARCH_FACTOR = 0.5
LINE_SEARCH_MAX_HALVINGS = 8
ARMIJO_C = 1e-4

# Linear solves
LU_BACKWARD_ERROR_TOL = 1e-10

# Local update defaults, as multiples of the particle radius
LOCAL_HALF_WIDTH_FACTOR = 10.0
REMESH_DISPLACEMENT_FACTOR = 0.3
REMESH_MIN_DETJ_RATIO = 0.2
REMESH_MIN_ANGLE_DEG = 12.0

# Background pseudo-time stepping
BACKGROUND_PSEUDO_DT = 1.0
BACKGROUND_MAX_STEPS = 500
BACKGROUND_STEADY_TOL = 1e-8

# Format version of the background-flow cache
CACHE_FORMAT_VERSION = 1


def validate_config() -> list[str]:
    """Validate configuration and return list of errors."""
    errors: list[str] = []
    if THREADS < 1:
        errors.append(f"ALE_FSI_THREADS must be >= 1, got {THREADS}")
    if ASSEMBLY_CHUNK < 1:
        errors.append(f"ALE_FSI_ASSEMBLY_CHUNK must be >= 1, got {ASSEMBLY_CHUNK}")
    if LOG_LEVEL not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
        errors.append(f"ALE_FSI_LOG_LEVEL is not a logging level: {LOG_LEVEL}")
    return errors
