"""
Configuration package for bumpy_torus.
"""

from .config import (
    DEDUP_RADIUS,
    DEFAULT_JOBS,
    DELTA_WIDTH_FACTOR,
    EPS_NORMAL,
    LOG_LEVEL,
    OUTPUT_DIR,
    SHOOTING_TOL,
    STEP_TOL,
    TOL_ANGLE,
    TOL_ENERGY,
    TOL_REG,
    TOL_ROOT,
    TOL_SYMP,
)
