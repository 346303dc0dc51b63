from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import Field

from models.base import ArrayModel
from models.flow import SymplecticMatrix4
from models.phase import PhasePoint
from utils.symplectic import gram_matrix
from utils.torus import phase_distance


class Stability(str, Enum):
    HYPERBOLIC = "hyperbolic"
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"


class SymplecticFrame(ArrayModel):
    """Basis (u1, u2, u1s, u2s) of T_θ(T*T²) adapted to the energy level."""

    base_point: PhasePoint
    u1: np.ndarray
    u2: np.ndarray
    u1s: np.ndarray
    u2s: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """Columns in the order (u1, u2, u1s, u2s)."""
        return np.column_stack([self.u1, self.u2, self.u1s, self.u2s])

    def gram(self) -> np.ndarray:
        return gram_matrix(self.matrix)

    def coordinates(self, vector: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.matrix, np.asarray(vector, dtype=float))

    @classmethod
    def canonical(cls, base_point: PhasePoint) -> "SymplecticFrame":
        """Standard basis; used for synthetic orbits built from a given dP."""
        e = np.eye(4)
        return cls(base_point=base_point, u1=e[0], u2=e[1], u1s=e[2], u2s=e[3])


class Verdict(ArrayModel):
    """Nondegeneracy of order m and the multiplicity cross-check."""

    m: int
    nondegenerate: bool
    eigenvalue_real: Optional[float] = None
    eigenvalue_imag: Optional[float] = None
    root_index: Optional[int] = None
    distance_to_root: float
    multiplicity_of_one: int
    agrees: bool


class PeriodicOrbit(ArrayModel):
    theta0: PhasePoint
    T_min: float
    k: float
    monodromy: SymplecticMatrix4
    frame: SymplecticFrame
    dP: np.ndarray
    verdicts: Dict[int, Verdict] = Field(default_factory=dict)
    stability: Stability
    residual: float
    converged_period: float

    @property
    def multipliers(self) -> np.ndarray:
        return np.linalg.eigvals(self.dP)

    def report(self) -> dict:
        """JSON record {theta0, T_min, k, monodromy, dP, verdicts, stability, residual}."""
        multipliers = self.multipliers
        return {
            "theta0": self.theta0.as_array().tolist(),
            "T_min": self.T_min,
            "k": self.k,
            "monodromy": self.monodromy.rows(),
            "dP": self.dP.tolist(),
            "multipliers": {
                "real": multipliers.real.tolist(),
                "imag": multipliers.imag.tolist(),
            },
            "verdicts": [
                verdict.model_dump(mode="json") for _, verdict in sorted(self.verdicts.items())
            ],
            "stability": self.stability.value,
            "residual": self.residual,
        }


class OrbitScan(ArrayModel):
    """Distinct orbits found on a level plus the empirical minimal period."""

    k: float
    T_max: float
    orbits: List[PeriodicOrbit] = Field(default_factory=list)
    min_period: Optional[float] = None
    seeds_tried: int = 0

    def __iter__(self) -> Iterator[PeriodicOrbit]:
        return iter(self.orbits)

    def __len__(self) -> int:
        return len(self.orbits)

    def __getitem__(self, index: int) -> PeriodicOrbit:
        return self.orbits[index]


class RhoValue(ArrayModel):
    normal_image: PhasePoint
    flow_image: PhasePoint
    level_defect: float
    normal_level_defect: float

    def on_diagonal(self, tol: float) -> bool:
        gap = phase_distance(self.normal_image.as_array(), self.flow_image.as_array())
        return gap <= tol and abs(self.level_defect) <= tol


class LevelCheck(ArrayModel):
    k: float
    is_regular: bool
    min_gradient_norm: float
    suggested_delta: Optional[float] = None
    critical_values: List[float] = Field(default_factory=list)
    level_points: int = 0


class TwistResult(ArrayModel):
    times: List[float] = Field(default_factory=list)
    non_discrete_intervals: List[Tuple[float, float]] = Field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.non_discrete_intervals)
