"""Section curves of invariant manifolds and their intersections."""

from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.base import ArrayModel
from models.terms import Support
from utils.jets import Jet


class Side(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


class Crossing(str, Enum):
    TRANSVERSAL = "transversal"
    TANGENTIAL = "tangential"


class Section(BaseModel):
    """Σ = {x_axis ≡ value}, crossed with the sign ``direction`` of ẋ_axis.

    Section coordinates are (x_j, p_j) for the other index j; x_j is kept
    unwrapped so curves stay continuous across the torus seam.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    axis: int = Field(default=1, ge=0, le=1)
    value: float = 0.0
    direction: int = 1

    @field_validator("direction")
    @classmethod
    def _unit_direction(cls, value):
        if value not in (-1, 1):
            raise ValueError(f"Crossing direction must be ±1, got {value}")
        return value

    @property
    def other(self) -> int:
        return 1 - self.axis

    def coordinates(self, state: np.ndarray) -> np.ndarray:
        return np.array([state[self.other], state[2 + self.other]])


class HyperbolicSplitting(ArrayModel):
    lambda_u: float
    v_u: np.ndarray
    lambda_s: float
    v_s: np.ndarray

    @property
    def product(self) -> float:
        return self.lambda_u * self.lambda_s


class ManifoldBranch(ArrayModel):
    """Polyline of section points on one branch of W^u or W^s.

    ``parameters`` holds the fundamental-domain parameter u of every point:
    point(u + 1) is the return image of point(u) (backward return for the
    stable side).
    """

    side: Side
    sign: int
    section: Section
    k: float
    fixed_point: np.ndarray
    eigenvalue: float
    direction: np.ndarray
    seed_distance: float
    steps_per_iterate: int = 1
    parameters: np.ndarray
    points: np.ndarray
    truncated: bool = False
    flow_time: float = 0.0

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative length from the fixed point along the polyline."""
        path = np.vstack([self.fixed_point, self.points])
        steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        return np.cumsum(steps)

    @property
    def length(self) -> float:
        return float(self.arclength[-1]) if len(self.points) else 0.0

    def shifted(self, offset: float) -> "ManifoldBranch":
        """Same branch with the angle coordinate moved by ``offset``."""
        delta = np.array([offset, 0.0])
        return self.model_copy(
            update={"points": self.points + delta, "fixed_point": self.fixed_point + delta}
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "arclength": self.arclength,
                "parameter": self.parameters,
                "coordinate": self.points[:, 0],
                "momentum": self.points[:, 1],
            }
        )


class FundamentalDomain(ArrayModel):
    start_parameter: float
    points: np.ndarray
    parameters: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


class HeteroclinicRecord(ArrayModel):
    point: np.ndarray
    tangent_u: np.ndarray
    tangent_s: np.ndarray
    angle: float
    classification: Crossing
    arclength_u: float
    arclength_s: float
    shift: int = 0

    def report(self) -> dict:
        return {
            "point": self.point.tolist(),
            "angle": self.angle,
            "classification": self.classification.value,
            "arclength_u": self.arclength_u,
            "arclength_s": self.arclength_s,
            "shift": self.shift,
        }


class LagrangianGraph(BaseModel):
    """Momentum field p(x) on a configuration domain, with jets to order 3.

    ``inner`` is the region V where the graph potential equals k − H(x, p(x));
    ``domain`` is the region D ⊃ V̄ outside which the potential vanishes.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    domain: Support = Field(default_factory=Support)
    inner: Support = Field(default_factory=Support)

    def momentum_jets(self, x: np.ndarray) -> Tuple[Jet, Jet]:
        raise NotImplementedError

    def momentum(self, x) -> np.ndarray:
        p1, p2 = self.momentum_jets(np.asarray(x, dtype=float))
        return np.array([p1.value, p2.value])

    def lift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, self.momentum(x)])

    def curl(self, x) -> float:
        """∂p₁/∂x₂ − ∂p₂/∂x₁."""
        p1, p2 = self.momentum_jets(np.asarray(x, dtype=float))
        return float(p1.grad[1] - p2.grad[0])


class TiltSpec(BaseModel):
    """Phase-ramped tilt t·∇χ of the separatrix graph inside a strip in x1."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    magnitude: float = 1e-3
    center: float = -1.0
    ramp_half_width: float = Field(default=0.5, gt=0)
    collar: float = Field(default=0.3, gt=0)
    mode: int = Field(default=2, ge=1)
    unstable_radius: float = Field(default=7.5, gt=0)
    stable_radius: float = Field(default=1.0, gt=0)
    unstable_sign: int = 1
    stable_sign: int = -1

    @property
    def inner(self) -> float:
        return self.ramp_half_width

    @property
    def outer(self) -> float:
        return self.ramp_half_width + self.collar

    @property
    def support(self) -> Support:
        return Support.strip(0, self.center, self.outer)


class SplitResult(ArrayModel):
    term: Any
    tilt: TiltSpec
    before: List[HeteroclinicRecord]
    after: List[HeteroclinicRecord]
    orbit_residuals: Tuple[float, float]
    blend_defect: float

    @staticmethod
    def _principal(records: List[HeteroclinicRecord]) -> Optional[float]:
        """Angle of the crossing farthest from γ₁ along W^s."""
        record = max(records, key=lambda r: r.arclength_s, default=None)
        return None if record is None else record.angle

    @property
    def angle_before(self) -> Optional[float]:
        return self._principal(self.before)

    @property
    def angle_after(self) -> Optional[float]:
        return self._principal(self.after)

    def report(self) -> dict:
        return {
            "tilt": self.tilt.model_dump(),
            "angle_before": self.angle_before,
            "angle_after": self.angle_after,
            "before": [r.report() for r in self.before],
            "after": [r.report() for r in self.after],
            "orbit_residuals": list(self.orbit_residuals),
            "blend_defect": self.blend_defect,
        }
