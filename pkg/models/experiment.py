"""Experiment configs and run reports.

Configs are JSON documents validated here; unknown keys anywhere are
rejected. A run produces a ``RunReport`` whose checks carry the measured
value next to the threshold it was held to.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import config
from models.manifold import TiltSpec
from models.system import MetricInverse
from models.terms import PotentialTermSpec
from models.tolerances import Tolerances


class TaskName(str, Enum):
    REGULARITY_SCAN = "regularity-scan"
    ORBIT_SCAN = "orbit-scan"
    CLASSIFY = "classify"
    PERTURB_NONDEGENERACY = "perturb-nondegeneracy"
    B_SURJECTIVITY = "B-surjectivity"
    PIZ_CHECK = "piZ-check"
    MANIFOLD_SPLITTING = "manifold-splitting"


class SystemSpec(BaseModel):
    """A preset (with keyword parameters) and/or an explicit metric and potential."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Optional[str] = None
    parameters: Dict[str, float] = Field(default_factory=dict)
    metric_inverse: Optional[MetricInverse] = None
    potential_terms: List[PotentialTermSpec] = Field(default_factory=list)


class OrbitSeed(BaseModel):
    """Initial guess (θ0, T) for Newton shooting."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta0: Tuple[float, float, float, float]
    T: float = Field(gt=0)


class TaskParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Scans
    T_max: float = Field(default=10.0, gt=0)
    m_max: int = Field(default=12, ge=1)
    grid_density: int = Field(default=1, ge=1)
    level_grid_density: int = Field(default=16, ge=2)

    # Orbits used by the per-orbit tasks
    orbit: Optional[OrbitSeed] = None
    second_orbit: Optional[OrbitSeed] = None
    charpoly_orders: List[int] = Field(default_factory=lambda: [1, 2, 3])
    audit_samples: int = Field(default=0, ge=0)
    audit_horizon: float = Field(default=50.0, gt=0)
    twist_horizon: float = Field(default=0.0, ge=0)

    # Perturbations
    t0_fraction: float = Field(default=0.5, gt=0, lt=1)
    widths: List[float] = Field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    min_convergence_rate: float = Field(default=0.8, gt=0)
    coefficients: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    measure_derivative: bool = False
    derivative_constant: float = Field(default=1.0, gt=0)
    coefficient_budget: float = Field(default=1e-2, gt=0)
    nondegeneracy_m: int = Field(default=2, ge=1)
    sweep_direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    sweep_amplitudes: List[float] = Field(default_factory=list)

    # Manifolds
    tilt: TiltSpec = Field(default_factory=TiltSpec)
    tilt_magnitudes: List[float] = Field(default_factory=list)
    min_split_angle: float = Field(default=1e-3, gt=0)
    min_r2: float = Field(default=0.99, gt=0, le=1)

    @field_validator("widths")
    @classmethod
    def _positive_widths(cls, value):
        if not value or any(w <= 0 for w in value):
            raise ValueError(f"Widths must be a non-empty list of positive fractions, got {value}")
        return value


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "experiment"
    task: TaskName
    system: SystemSpec
    k: float
    params: TaskParams = Field(default_factory=TaskParams)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output_dir: str = config.OUTPUT_DIR
    jobs: int = Field(default=config.DEFAULT_JOBS, ge=0)
    seed: int = 0


class CheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    measured: Optional[float] = None
    threshold: Optional[float] = None
    detail: Optional[str] = None


class RunReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    task: TaskName
    config: Dict[str, Any]
    results: Dict[str, Any] = Field(default_factory=dict)
    series: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    tolerance_audit: Dict[str, float] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]
