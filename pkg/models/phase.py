from typing import Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from utils.errors import InvalidInputError
from utils.torus import TWO_PI, torus_distance


def _finite(values: Sequence[float], label: str) -> None:
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise InvalidInputError(f"{label} must be finite, got {list(values)}")


class TorusPoint(BaseModel):
    """A point on T² = ℝ²/2πℤ², stored by its representative in [0, 2π)²."""

    model_config = ConfigDict(frozen=True)

    x1: float
    x2: float

    @field_validator("x1", "x2", mode="before")
    @classmethod
    def _reduce(cls, value):
        value = float(value)
        if not np.isfinite(value):
            raise InvalidInputError(f"Angle must be finite, got {value}")
        reduced = value % TWO_PI
        return 0.0 if reduced >= TWO_PI else reduced

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def distance(self, other: "TorusPoint") -> float:
        return torus_distance(self.as_array(), other.as_array())


class PhasePoint(BaseModel):
    """A covector (x, p) in T*T²."""

    model_config = ConfigDict(frozen=True)

    x: TorusPoint
    p: Tuple[float, float]

    @field_validator("p")
    @classmethod
    def _finite_momentum(cls, value):
        _finite(value, "Momentum")
        return value

    @classmethod
    def from_values(cls, x1: float, x2: float, p1: float, p2: float) -> "PhasePoint":
        return cls(x=TorusPoint(x1=x1, x2=x2), p=(p1, p2))

    @classmethod
    def from_array(cls, state: Sequence[float]) -> "PhasePoint":
        state = np.asarray(state, dtype=float)
        return cls.from_values(*state[:4])

    def as_array(self) -> np.ndarray:
        return np.array([self.x.x1, self.x.x2, self.p[0], self.p[1]])


class TangentPoint(BaseModel):
    """A velocity (x, v) in TT², the Lagrangian-side state."""

    model_config = ConfigDict(frozen=True)

    x: TorusPoint
    v: Tuple[float, float]

    @field_validator("v")
    @classmethod
    def _finite_velocity(cls, value):
        _finite(value, "Velocity")
        return value

    @classmethod
    def from_values(cls, x1: float, x2: float, v1: float, v2: float) -> "TangentPoint":
        return cls(x=TorusPoint(x1=x1, x2=x2), v=(v1, v2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x.x1, self.x.x2, self.v[0], self.v[1]])


StateLike = Union[PhasePoint, Sequence[float], np.ndarray]


def as_state(theta: StateLike) -> np.ndarray:
    """Raw (x1, x2, p1, p2) array of a phase point; angles are not reduced."""
    if isinstance(theta, PhasePoint):
        return theta.as_array()
    state = np.asarray(theta, dtype=float)
    if state.shape != (4,):
        raise InvalidInputError(f"Phase point needs 4 components, got shape {state.shape}")
    _finite(state, "Phase point")
    return state
