from typing import Any, Optional

import numpy as np
import pandas as pd
from pydantic import Field, field_validator

from models.base import ArrayModel
from models.phase import PhasePoint
from utils.errors import InvalidInputError
from utils.symplectic import symplectic_defect
from utils.torus import wrap_angle


class SymplecticMatrix4(ArrayModel):
    """4×4 matrix in block order (x1, x2, p1, p2)."""

    matrix: np.ndarray
    is_flow_differential: bool = True

    @field_validator("matrix", mode="before")
    @classmethod
    def _shape(cls, value):
        value = np.array(value, dtype=float)
        if value.shape != (4, 4):
            raise ValueError(f"Expected a 4×4 matrix, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ValueError("Matrix entries must be finite")
        return value

    def symplectic_defect(self) -> float:
        return symplectic_defect(self.matrix)

    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def rows(self) -> list:
        return self.matrix.tolist()


class Trajectory(ArrayModel):
    """Sampled solution of the Hamiltonian flow with dense output."""

    times: np.ndarray
    states: np.ndarray  # (N, 4), angles unwrapped
    energies: np.ndarray
    solution: Optional[Any] = Field(default=None, exclude=True, repr=False)

    def state_at(self, t: float) -> np.ndarray:
        if self.solution is None:
            if np.isclose(t, self.times[0]):
                return self.states[0].copy()
            raise InvalidInputError("Trajectory has no dense output")
        return np.asarray(self.solution(t), dtype=float)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def endpoint(self) -> PhasePoint:
        return PhasePoint.from_array(self.states[-1])

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def to_frame(self) -> pd.DataFrame:
        """Samples as columns t, x1, x2, p1, p2, H with angles in [0, 2π)."""
        return pd.DataFrame(
            {
                "t": self.times,
                "x1": wrap_angle(self.states[:, 0]),
                "x2": wrap_angle(self.states[:, 1]),
                "p1": self.states[:, 2],
                "p2": self.states[:, 3],
                "H": self.energies,
            }
        )
