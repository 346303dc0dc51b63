import os

from dotenv import load_dotenv

# Load .env by default, or .env.<ENV> when ENV is set (e.g. ENV=ci)
env_file = f".env.{os.getenv('ENV')}" if os.getenv("ENV") else ".env"
load_dotenv(dotenv_path=env_file)


def _float_setting(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise EnvironmentError(f"{name} must be a number, got {raw!r}")


def _int_setting(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise EnvironmentError(f"{name} must be an integer, got {raw!r}")


# Integrator tolerances
STEP_TOL = _float_setting("BUMPY_STEP_TOL", 1e-10)
SHOOTING_TOL = _float_setting("BUMPY_SHOOTING_TOL", 1e-12)
TOL_SYMP = _float_setting("BUMPY_TOL_SYMP", 1e-8)
TOL_ENERGY = _float_setting("BUMPY_TOL_ENERGY", 1e-9)
EPS_NORMAL = _float_setting("BUMPY_EPS_NORMAL", 0.1)

# Orbit classification
TOL_ROOT = _float_setting("BUMPY_TOL_ROOT", 1e-6)
TOL_REG = _float_setting("BUMPY_TOL_REG", 1e-5)
DEDUP_RADIUS = _float_setting("BUMPY_DEDUP_RADIUS", 1e-4)

# Perturbations and manifolds
TOL_ANGLE = _float_setting("BUMPY_TOL_ANGLE", 1e-4)
DELTA_WIDTH_FACTOR = _float_setting("BUMPY_DELTA_WIDTH_FACTOR", 1e-2)

# Runner
LOG_LEVEL = os.getenv("BUMPY_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("BUMPY_OUTPUT_DIR", "runs")
DEFAULT_JOBS = _int_setting("BUMPY_JOBS", 0)  # 0 means one job per core
