"""Mechanical Hamiltonians H(x, p) = ½ pᵀG⁻¹(x)p + U(x) on T*T²."""

from typing import List, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.terms import Harmonic, PerturbationTerm, TrigPolynomialTerm
from utils.jets import Jet, jet_sum


def _unit_entry() -> TrigPolynomialTerm:
    return TrigPolynomialTerm(harmonics=[Harmonic(k=(0, 0), cos=1.0)])


class MetricInverse(BaseModel):
    """Symmetric G⁻¹(x) = [[g11, g12], [g12, g22]] with trig-polynomial entries."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    g11: TrigPolynomialTerm = Field(default_factory=_unit_entry)
    g12: TrigPolynomialTerm = Field(default_factory=TrigPolynomialTerm)
    g22: TrigPolynomialTerm = Field(default_factory=_unit_entry)

    def entries(self):
        return self.g11, self.g12, self.g22

    def matrix(self, x) -> np.ndarray:
        g11, g12, g22 = (entry.value_and_gradient(x)[0] for entry in self.entries())
        return np.array([[g11, g12], [g12, g22]])

    def smallest_eigenvalue_on_grid(self, density: int = 12) -> float:
        grid = np.linspace(0.0, 2.0 * np.pi, density, endpoint=False)
        points = np.array([(a, b) for a in grid for b in grid])
        g11 = self.g11.values(points)
        g12 = self.g12.values(points)
        g22 = self.g22.values(points)
        mean = 0.5 * (g11 + g22)
        spread = np.sqrt(0.25 * (g11 - g22) ** 2 + g12**2)
        return float(np.min(mean - spread))


class HamiltonianJet(NamedTuple):
    """Partial derivatives of H at one phase point, block order (x, p)."""

    H: float
    H_x: np.ndarray
    H_p: np.ndarray
    H_xx: np.ndarray
    H_xp: np.ndarray  # [a, j] = ∂²H/∂x_a∂p_j
    H_pp: np.ndarray
    H_xxx: np.ndarray
    H_xxp: np.ndarray  # [a, b, j]
    H_xpp: np.ndarray  # [a, i, j]

    def gradient(self) -> np.ndarray:
        return np.concatenate([self.H_x, self.H_p])

    def hessian(self) -> np.ndarray:
        return np.block([[self.H_xx, self.H_xp], [self.H_xp.T, self.H_pp]])

    def third_tensor(self) -> np.ndarray:
        tensor = np.zeros((4, 4, 4))
        tensor[:2, :2, :2] = self.H_xxx
        tensor[:2, :2, 2:] = self.H_xxp
        tensor[:2, 2:, :2] = self.H_xxp.transpose(0, 2, 1)
        tensor[2:, :2, :2] = self.H_xxp.transpose(2, 0, 1)
        tensor[:2, 2:, 2:] = self.H_xpp
        tensor[2:, :2, 2:] = self.H_xpp.transpose(1, 0, 2)
        tensor[2:, 2:, :2] = self.H_xpp.transpose(1, 2, 0)
        return tensor


class MechanicalSystem(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "custom"
    metric_inverse: MetricInverse = Field(default_factory=MetricInverse)
    potential_terms: List[PerturbationTerm] = Field(default_factory=list)

    @model_validator(mode="after")
    def _positive_definite(self):
        smallest = self.metric_inverse.smallest_eigenvalue_on_grid()
        if not smallest > 0.0:
            raise ValueError(
                f"Metric inverse is not positive definite (eigenvalue {smallest:.3e})"
            )
        return self

    def potential_jet(self, x: np.ndarray) -> Jet:
        return jet_sum([term.jet(x) for term in self.potential_terms])

    def potential(self, x) -> float:
        return sum(term.value_and_gradient(x)[0] for term in self.potential_terms)

    def hamiltonian_value(self, state: np.ndarray) -> float:
        x, p = state[:2], state[2:]
        return 0.5 * float(p @ self.metric_inverse.matrix(x) @ p) + self.potential(x)

    def field(self, state: np.ndarray) -> np.ndarray:
        """Hamiltonian vector field (H_p, −H_x); only first derivatives are formed."""
        x, p = state[:2], state[2:]
        values, grads = [], []
        for entry in self.metric_inverse.entries():
            value, grad = entry.value_and_gradient(x)
            values.append(value)
            grads.append(grad)
        g11, g12, g22 = values
        d11, d12, d22 = grads
        H_p = np.array([g11 * p[0] + g12 * p[1], g12 * p[0] + g22 * p[1]])
        H_x = 0.5 * (p[0] ** 2 * d11 + 2.0 * p[0] * p[1] * d12 + p[1] ** 2 * d22)
        for term in self.potential_terms:
            H_x = H_x + term.value_and_gradient(x)[1]
        return np.concatenate([H_p, -H_x])

    def hamiltonian_jet(self, state: np.ndarray) -> HamiltonianJet:
        x, p = state[:2], state[2:]
        g11, g12, g22 = (entry.jet(x) for entry in self.metric_inverse.entries())
        G = np.array([[g11.value, g12.value], [g12.value, g22.value]])
        dG = np.array([[g11.grad, g12.grad], [g12.grad, g22.grad]])
        d2G = np.array([[g11.hess, g12.hess], [g12.hess, g22.hess]])
        d3G = np.array([[g11.third, g12.third], [g12.third, g22.third]])
        U = self.potential_jet(x)
        return HamiltonianJet(
            H=0.5 * float(p @ G @ p) + U.value,
            H_x=0.5 * np.einsum("i,j,ija->a", p, p, dG) + U.grad,
            H_p=G @ p,
            H_xx=0.5 * np.einsum("i,j,ijab->ab", p, p, d2G) + U.hess,
            H_xp=np.einsum("jia,i->aj", dG, p),
            H_pp=G,
            H_xxx=0.5 * np.einsum("i,j,ijabc->abc", p, p, d3G) + U.third,
            H_xxp=np.einsum("jiab,i->abj", d2G, p),
            H_xpp=dG.transpose(2, 0, 1),
        )
