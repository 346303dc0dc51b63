"""Third-order jets of scalar functions on the plane.

A ``Jet`` carries the value, gradient, Hessian and third-derivative tensor of
a smooth function at one point. Sums, products and compositions with scalar
functions follow the Leibniz and chain rules exactly, which is how every
derived potential term obtains analytic derivatives up to order 3.
"""

from typing import Sequence

import numpy as np


def _sym3(vector: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """a_i B_jk + a_j B_ik + a_k B_ij."""
    return (
        np.einsum("i,jk->ijk", vector, matrix)
        + np.einsum("j,ik->ijk", vector, matrix)
        + np.einsum("k,ij->ijk", vector, matrix)
    )


class Jet:
    __slots__ = ("value", "grad", "hess", "third")

    def __init__(self, value, grad, hess, third):
        self.value = float(value)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)
        self.third = np.asarray(third, dtype=float)

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    @classmethod
    def constant(cls, value: float, dim: int = 2) -> "Jet":
        return cls(
            value, np.zeros(dim), np.zeros((dim, dim)), np.zeros((dim, dim, dim))
        )

    @classmethod
    def zero(cls, dim: int = 2) -> "Jet":
        return cls.constant(0.0, dim)

    @classmethod
    def linear(cls, value: float, grad: Sequence[float]) -> "Jet":
        """Jet of an affine function with the given value and gradient."""
        grad = np.asarray(grad, dtype=float)
        dim = grad.shape[0]
        return cls(value, grad, np.zeros((dim, dim)), np.zeros((dim, dim, dim)))

    @classmethod
    def coordinate(cls, index: int, value: float, dim: int = 2) -> "Jet":
        grad = np.zeros(dim)
        grad[index] = 1.0
        return cls.linear(value, grad)

    def is_zero(self) -> bool:
        return (
            self.value == 0.0
            and not self.grad.any()
            and not self.hess.any()
            and not self.third.any()
        )

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.value + other.value,
                self.grad + other.grad,
                self.hess + other.hess,
                self.third + other.third,
            )
        return Jet(self.value + other, self.grad, self.hess, self.third)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.value, -self.grad, -self.hess, -self.third)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(
                self.value * other,
                self.grad * other,
                self.hess * other,
                self.third * other,
            )
        f, g = self, other
        return Jet(
            f.value * g.value,
            f.value * g.grad + g.value * f.grad,
            f.value * g.hess
            + g.value * f.hess
            + np.outer(f.grad, g.grad)
            + np.outer(g.grad, f.grad),
            f.value * g.third
            + g.value * f.third
            + _sym3(f.grad, g.hess)
            + _sym3(g.grad, f.hess),
        )

    __rmul__ = __mul__

    def compose(self, derivatives: Sequence[float]) -> "Jet":
        """Jet of φ∘f given (φ, φ', φ'', φ''') evaluated at f's value."""
        phi0, phi1, phi2, phi3 = derivatives
        g = self.grad
        return Jet(
            phi0,
            phi1 * g,
            phi2 * np.outer(g, g) + phi1 * self.hess,
            phi3 * np.einsum("i,j,k->ijk", g, g, g)
            + phi2 * _sym3(g, self.hess)
            + phi1 * self.third,
        )

    def reciprocal(self) -> "Jet":
        v = self.value
        return self.compose((1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4))

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose((s, c, -s, -c))

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose((c, -s, -c, s))

    def square(self) -> "Jet":
        return self * self

    def __repr__(self) -> str:
        return f"Jet(value={self.value!r}, grad={self.grad.tolist()!r})"


def jet_sum(jets: Sequence[Jet], dim: int = 2) -> Jet:
    """Sum of jets, zero jet for an empty sequence."""
    total = Jet.zero(dim)
    for jet in jets:
        total = total + jet
    return total
