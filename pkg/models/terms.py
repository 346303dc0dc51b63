"""Potential terms on the torus.

Every term supplies a third-order ``Jet`` at a configuration point. The two
closed-form kinds (trig polynomial, radial bump) can be written in experiment
configs; derived kinds (tubular-delta, graph potential) are built by the
services and subclass ``PerturbationTerm`` there.
"""

from enum import Enum
from functools import cached_property
from typing import Annotated, List, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.jets import Jet
from utils.torus import angle_difference, torus_distance


class TermKind(str, Enum):
    TRIG_POLYNOMIAL = "trig-polynomial"
    RADIAL_BUMP = "radial-bump"
    TUBULAR_DELTA = "tubular-delta"
    GRAPH_POTENTIAL = "graph-potential"


class SupportKind(str, Enum):
    FULL = "full"
    DISC = "disc"
    STRIP = "strip"


class Support(BaseModel):
    """Region of the torus containing the numerical support of a term."""

    model_config = ConfigDict(frozen=True)

    kind: SupportKind = SupportKind.FULL
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    # Strips are {|x_axis − center[axis]| < half_width}
    axis: int = 0
    half_width: float = 0.0

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == SupportKind.FULL:
            return True
        if self.kind == SupportKind.DISC:
            return torus_distance(x, self.center) < self.radius
        offset = angle_difference(x[self.axis], self.center[self.axis])
        return bool(abs(offset) < self.half_width)

    @classmethod
    def disc(cls, center, radius: float) -> "Support":
        return cls(kind=SupportKind.DISC, center=tuple(center), radius=radius)

    @classmethod
    def strip(cls, axis: int, center: float, half_width: float) -> "Support":
        point = [0.0, 0.0]
        point[axis] = center
        return cls(
            kind=SupportKind.STRIP,
            center=tuple(point),
            axis=axis,
            half_width=half_width,
        )


class PerturbationTerm(BaseModel):
    """A smooth potential term with derivatives to order 3."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, extra="forbid")

    scale: float = 1.0

    def raw_jet(self, x: np.ndarray) -> Jet:
        raise NotImplementedError

    def jet(self, x) -> Jet:
        jet = self.raw_jet(np.asarray(x, dtype=float))
        return jet if self.scale == 1.0 else jet * self.scale

    def value(self, x) -> float:
        return self.jet(x).value

    def value_and_gradient(self, x) -> Tuple[float, np.ndarray]:
        jet = self.jet(x)
        return jet.value, jet.grad

    @property
    def support(self) -> Support:
        return Support()

    def scaled(self, factor: float) -> "PerturbationTerm":
        return self.model_copy(update={"scale": self.scale * factor})


class Harmonic(BaseModel):
    """One Fourier mode: cos·cos(k·x) + sin·sin(k·x)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: Tuple[int, int]
    cos: float = 0.0
    sin: float = 0.0


class TrigPolynomialTerm(PerturbationTerm):
    kind: Literal["trig-polynomial"] = "trig-polynomial"
    harmonics: List[Harmonic] = Field(default_factory=list)

    @cached_property
    def harmonic_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        modes = np.array([h.k for h in self.harmonics], dtype=float).reshape(-1, 2)
        cos = np.array([h.cos for h in self.harmonics], dtype=float)
        sin = np.array([h.sin for h in self.harmonics], dtype=float)
        return modes, cos, sin

    def raw_jet(self, x: np.ndarray) -> Jet:
        modes, cos, sin = self.harmonic_arrays
        if modes.shape[0] == 0:
            return Jet.zero()
        phase = modes @ x
        c, s = np.cos(phase), np.sin(phase)
        first = -cos * s + sin * c
        second = -cos * c - sin * s
        third = cos * s - sin * c
        return Jet(
            float(np.dot(cos, c) + np.dot(sin, s)),
            modes.T @ first,
            np.einsum("m,mi,mj->ij", second, modes, modes),
            np.einsum("m,mi,mj,mk->ijk", third, modes, modes, modes),
        )

    def value_and_gradient(self, x) -> Tuple[float, np.ndarray]:
        modes, cos, sin = self.harmonic_arrays
        if modes.shape[0] == 0:
            return 0.0, np.zeros(2)
        phase = modes @ np.asarray(x, dtype=float)
        c, s = np.cos(phase), np.sin(phase)
        value = float(np.dot(cos, c) + np.dot(sin, s))
        return self.scale * value, self.scale * (modes.T @ (-cos * s + sin * c))

    def values(self, points: np.ndarray) -> np.ndarray:
        """Vectorized values on an (N, 2) array of points."""
        modes, cos, sin = self.harmonic_arrays
        if modes.shape[0] == 0:
            return np.zeros(len(points))
        phase = np.asarray(points, dtype=float) @ modes.T
        return self.scale * (np.cos(phase) @ cos + np.sin(phase) @ sin)

    @classmethod
    def constant(cls, value: float) -> "TrigPolynomialTerm":
        return cls(harmonics=[Harmonic(k=(0, 0), cos=value)])


class RadialBumpTerm(PerturbationTerm):
    """height·exp(1 − 1/(1 − |x − c|²/r²)) on the disc of radius r, zero outside."""

    kind: Literal["radial-bump"] = "radial-bump"
    center: Tuple[float, float]
    radius: float
    height: float

    @field_validator("radius")
    @classmethod
    def _positive_radius(cls, value):
        if not 0.0 < value < np.pi:
            raise ValueError(f"Bump radius must lie in (0, π), got {value}")
        return value

    @property
    def support(self) -> Support:
        return Support.disc(self.center, self.radius)

    def raw_jet(self, x: np.ndarray) -> Jet:
        offset = angle_difference(x, self.center)
        r2 = self.radius**2
        rho = float(np.dot(offset, offset)) / r2
        if rho >= 1.0:
            return Jet.zero()
        rho_jet = Jet(rho, 2.0 * offset / r2, 2.0 * np.eye(2) / r2, np.zeros((2, 2, 2)))
        gap = 1.0 - rho
        base = self.height * np.exp(1.0 - 1.0 / gap)
        q1 = -1.0 / gap**2
        q2 = -2.0 / gap**3
        q3 = -6.0 / gap**4
        return rho_jet.compose(
            (
                base,
                q1 * base,
                (q2 + q1**2) * base,
                (q3 + 3.0 * q1 * q2 + q1**3) * base,
            )
        )


PotentialTermSpec = Annotated[
    Union[TrigPolynomialTerm, RadialBumpTerm], Field(discriminator="kind")
]
