"""Potentials localized along a periodic orbit and their effect on dP.

Mollified deltas in the orbit time, tubular charts around a piece of the
base curve, the h_{α,β} family with its forced-variational image B(h), the
(a, b, c) family whose first-order effect on the projected monodromy is
π(𝒵), and a coefficient search that makes an orbit nondegenerate.
"""

import itertools
import logging
from functools import cached_property, lru_cache
from math import comb
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import quad
from scipy.optimize import brentq

from models.base import ArrayModel
from models.orbit import PeriodicOrbit
from models.perturbation import ComplementarityReport, DSRank, NondegeneracyResult, PiZCheck
from models.system import MechanicalSystem
from models.terms import PerturbationTerm, Support, TrigPolynomialTerm
from models.tolerances import Tolerances, resolve
from services.flow_engine import (
    flow_differential,
    forced_variational,
    hamiltonian_field,
    integrate_flow,
    normal_field,
    variational_solution,
)
from services.orbit_lab import (
    build_orbit,
    classify_nondegeneracy,
    poincare_block,
    root_of_unity_distance,
)
from services.systems import add_potential
from utils.errors import ChartFailureError, InvalidInputError, NoImprovementError
from utils.fitting import loglog_rate
from utils.jets import Jet
from utils.symplectic import J4, frame_expansion, project_pi, symplectic_defect
from utils.torus import angle_difference, wrap_angle

logger = logging.getLogger(__name__)

CHART_DEGREE = 9
CHART_NODES = 64
T1_FRACTIONS = (0.5, 0.37, 0.63, 0.25, 0.75)
CANDIDATE_MAGNITUDES = (1.0, 0.5, 0.25, 0.1)

Coefficient = Union[float, Sequence[float], Polynomial]


# Mollifier profile ψ(u) = exp(−1/(1 − u²)) on (−1, 1)


@lru_cache(maxsize=None)
def _bump_polynomial(n: int) -> Polynomial:
    """P_n with ψ^(n)(u) = P_n(u)·(1 − u²)^(−2n)·ψ(u)."""
    if n == 0:
        return Polynomial([1.0])
    previous = _bump_polynomial(n - 1)
    u = Polynomial([0.0, 1.0])
    w = Polynomial([1.0, 0.0, -1.0])
    k = n - 1
    return previous.deriv() * w**2 + 4 * k * u * w * previous - 2 * u * previous


def bump_derivative(u: float, n: int = 0) -> float:
    if abs(u) >= 1.0:
        return 0.0
    w = 1.0 - u * u
    if w < 1e-3:
        return 0.0
    return float(_bump_polynomial(n)(u) * w ** (-2 * n) * np.exp(-1.0 / w))


@lru_cache(maxsize=None)
def bump_mass() -> float:
    """∫ψ over (−1, 1) ≈ 0.443994."""
    return quad(bump_derivative, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]


class MollifiedDelta(BaseModel):
    """δ^(order) of a unit-mass bump of half-width ``width`` centered at ``center``."""

    model_config = ConfigDict(frozen=True)

    center: float
    width: float = Field(gt=0)
    order: int = Field(default=0, ge=0, le=3)

    @property
    def support(self) -> Tuple[float, float]:
        return self.center - self.width, self.center + self.width

    def derivatives(self, t: float, count: int = 4) -> np.ndarray:
        """[δ^(order)(t), δ^(order+1)(t), …] with ``count`` entries."""
        u = (t - self.center) / self.width
        mass = bump_mass()
        return np.array(
            [
                bump_derivative(u, self.order + j) / (mass * self.width ** (1 + self.order + j))
                for j in range(count)
            ]
        )

    def __call__(self, t: float) -> float:
        return float(self.derivatives(t, 1)[0])

    def cdf(self, t: float) -> float:
        """Antiderivative vanishing left of the support."""
        if self.order > 0:
            return float(self.derivative(self.order - 1)(t))
        lower, upper = self.support
        if t <= lower:
            return 0.0
        if t >= upper:
            return 1.0
        u = (t - self.center) / self.width
        return quad(bump_derivative, -1.0, u, epsabs=1e-15, epsrel=1e-13)[0] / bump_mass()

    def derivative(self, order: int) -> "MollifiedDelta":
        return self.model_copy(update={"order": order})

    def integrate(self, g) -> float:
        """∫ g·δ^(order) dt over the support."""
        lower, upper = self.support
        return quad(
            lambda t: g(t) * self(t),
            lower,
            upper,
            points=[self.center],
            epsabs=1e-13,
            epsrel=1e-12,
            limit=200,
        )[0]


def make_delta(t1: float, width: float, order: int = 0) -> MollifiedDelta:
    if not width > 0:
        raise InvalidInputError(f"Mollifier width must be positive, got {width}")
    if order not in (0, 1, 2):
        raise InvalidInputError(f"Delta derivative order must be 0, 1 or 2, got {order}")
    return MollifiedDelta(center=t1, width=width, order=order)


_STEP = MollifiedDelta(center=0.5, width=0.5)


class PlateauCutoff(BaseModel):
    """σ(z) = 1 for |z| ≤ inner, 0 for |z| ≥ outer, smooth in between."""

    model_config = ConfigDict(frozen=True)

    inner: float = Field(gt=0)
    outer: float = Field(gt=0)

    def derivatives(self, z: float) -> Tuple[float, float, float, float]:
        r = abs(z)
        if r <= self.inner:
            return 1.0, 0.0, 0.0, 0.0
        if r >= self.outer:
            return 0.0, 0.0, 0.0, 0.0
        span = self.outer - self.inner
        v = (self.outer - r) / span
        dv = -np.sign(z) / span
        d1, d2, d3 = _STEP.derivatives(v, 3)
        return _STEP.cdf(v), d1 * dv, d2 * dv**2, d3 * dv**3


class TubularChart(ArrayModel):
    """Graph chart x ↦ (s, z) around the base curve on [t0 − ε, t0 + ε].

    With u, w the coordinates of x − x(t0) along and across the velocity
    ẋ(t0), the curve is {w = g(u)} and is traversed at time τ(u);
    s = τ(u) and z = w − g(u).
    """

    t0: float
    half_width: float
    origin: np.ndarray
    e_u: np.ndarray
    e_w: np.ndarray
    u_range: Tuple[float, float]
    tau: Polynomial
    g: Polynomial
    speed: float

    @cached_property
    def tau_derivatives(self) -> List[Polynomial]:
        return [self.tau] + [self.tau.deriv(k) for k in (1, 2, 3)]

    @cached_property
    def g_derivatives(self) -> List[Polynomial]:
        return [self.g] + [self.g.deriv(k) for k in (1, 2, 3)]

    @cached_property
    def extent(self) -> float:
        """Radius of a disc around the origin containing the charted curve piece."""
        u = np.linspace(*self.u_range, 33)
        return float(np.max(np.hypot(u, self.g(u))))

    def local(self, x) -> Tuple[float, float]:
        offset = angle_difference(np.asarray(x, dtype=float), self.origin)
        return float(offset @ self.e_u), float(offset @ self.e_w)

    def contains(self, x) -> bool:
        u, _ = self.local(x)
        return self.u_range[0] <= u <= self.u_range[1]

    def to_chart(self, x) -> Tuple[float, float]:
        u, w = self.local(x)
        if not self.u_range[0] <= u <= self.u_range[1]:
            raise ChartFailureError(f"Point {x} lies outside the chart (u = {u:.6g})")
        return float(self.tau(u)), w - float(self.g(u))

    def inverse(self, s: float, z: float) -> np.ndarray:
        if not self.t0 - self.half_width <= s <= self.t0 + self.half_width:
            raise ChartFailureError(
                f"Chart time {s:.6g} outside [{self.t0 - self.half_width:.6g}, "
                f"{self.t0 + self.half_width:.6g}]"
            )
        u = brentq(lambda v: self.tau(v) - s, *self.u_range, xtol=1e-14)
        w = float(self.g(u)) + z
        return wrap_angle(self.origin + u * self.e_u + w * self.e_w)

    def jets(self, x) -> Tuple[Jet, Jet]:
        u, w = self.local(x)
        u_jet = Jet.linear(u, self.e_u)
        s_jet = u_jet.compose([float(p(u)) for p in self.tau_derivatives])
        z_jet = Jet.linear(w, self.e_w) - u_jet.compose([float(p(u)) for p in self.g_derivatives])
        return s_jet, z_jet

    def differential(self, x) -> np.ndarray:
        """dF with rows ∇s, ∇z."""
        s_jet, z_jet = self.jets(x)
        return np.vstack([s_jet.grad, z_jet.grad])


def build_tubular_chart(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t0: float,
    eps: float,
    tolerances: Optional[Tolerances] = None,
) -> TubularChart:
    tolerances = resolve(tolerances)
    if not 0 < eps < 0.5 * orbit.T_min:
        raise InvalidInputError(f"Chart half-width must lie in (0, T/2), got {eps}")
    tol = tolerances.shooting_tol
    center = integrate_flow(sys, orbit.theta0, t0, tol=tol).states[-1]
    velocity = sys.field(center)[:2]
    speed = float(np.linalg.norm(velocity))
    if speed <= tolerances.chart_tol:
        raise ChartFailureError(
            f"Configuration velocity vanishes at t={t0:.6g}; shift the chart time"
        )
    e_u = velocity / speed
    e_w = np.array([-e_u[1], e_u[0]])

    forward = integrate_flow(sys, center, eps, tol=tol)
    backward = integrate_flow(sys, center, -eps, tol=tol)
    nodes = eps * np.cos(np.pi * (np.arange(CHART_NODES) + 0.5) / CHART_NODES)
    states = np.array(
        [forward.state_at(r) if r >= 0 else backward.state_at(r) for r in nodes]
    )
    along = np.array([sys.field(s)[:2] @ e_u for s in states])
    if np.any(along <= 0):
        raise ChartFailureError(
            f"Base curve turns back within {eps:.3g} of t={t0:.6g}; shift the chart time"
        )
    offsets = states[:, :2] - center[:2]
    u = offsets @ e_u
    w = offsets @ e_w
    if u.max() - u.min() >= np.pi:
        raise ChartFailureError("Chart segment too long for a single torus chart")
    tau = Polynomial.fit(u, t0 + nodes, CHART_DEGREE)
    g = Polynomial.fit(u, w, CHART_DEGREE)
    fit_error = max(
        float(np.max(np.abs(tau(u) - t0 - nodes))), float(np.max(np.abs(g(u) - w)))
    )
    if fit_error > tolerances.chart_tol:
        raise ChartFailureError(f"Chart fit error {fit_error:.3e} above {tolerances.chart_tol:.0e}")
    return TubularChart(
        t0=t0,
        half_width=eps,
        origin=wrap_angle(center[:2]),
        e_u=e_u,
        e_w=e_w,
        u_range=(float(u.min()), float(u.max())),
        tau=tau,
        g=g,
        speed=speed,
    )


def _as_polynomial(value: Coefficient) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    return Polynomial(np.atleast_1d(np.asarray(value, dtype=float)))


class DeltaProfile(ArrayModel):
    """φ(s) = Σ c_i(s − center)·δ_i(s)."""

    center: float
    coefficients: List[Polynomial]
    deltas: List[MollifiedDelta]

    @property
    def window(self) -> Tuple[float, float]:
        return (
            min(d.support[0] for d in self.deltas),
            max(d.support[1] for d in self.deltas),
        )

    def derivatives(self, s: float) -> np.ndarray:
        """(φ, φ', φ'', φ''') at s by the Leibniz rule."""
        out = np.zeros(4)
        offset = s - self.center
        for coefficient, delta in zip(self.coefficients, self.deltas):
            c = [float(coefficient(offset))] + [float(coefficient.deriv(l)(offset)) for l in (1, 2, 3)]
            d = delta.derivatives(s, 4)
            for j in range(4):
                out[j] += sum(comb(j, l) * c[l] * d[j - l] for l in range(j + 1))
        return out


class TubularDeltaTerm(PerturbationTerm):
    """σ(z)·φ(s)·z^power (power 2 carries a factor ½) in a tubular chart."""

    kind: Literal["tubular-delta"] = "tubular-delta"
    chart: TubularChart
    profile: DeltaProfile
    power: Literal[1, 2] = 1
    cutoff: PlateauCutoff

    @property
    def support(self) -> Support:
        return Support.disc(tuple(self.chart.origin), self.chart.extent + self.cutoff.outer)

    @property
    def breakpoints(self) -> Tuple[float, float]:
        return self.profile.window

    def raw_jet(self, x: np.ndarray) -> Jet:
        u, w = self.chart.local(x)
        if not self.chart.u_range[0] < u < self.chart.u_range[1]:
            return Jet.zero()
        z = w - float(self.chart.g(u))
        if abs(z) >= self.cutoff.outer:
            return Jet.zero()
        s = float(self.chart.tau(u))
        lower, upper = self.profile.window
        if not lower < s < upper:
            return Jet.zero()
        s_jet, z_jet = self.chart.jets(x)
        phi = s_jet.compose(self.profile.derivatives(s))
        sigma = z_jet.compose(self.cutoff.derivatives(z))
        factor = z_jet if self.power == 1 else 0.5 * z_jet.square()
        return phi * sigma * factor


def _cutoff(radius: float) -> PlateauCutoff:
    return PlateauCutoff(inner=radius, outer=2.0 * radius)


def build_h_alpha_beta(
    chart: TubularChart,
    alpha: Coefficient,
    beta: Coefficient,
    delta: Optional[MollifiedDelta] = None,
    cutoff_radius: float = 0.1,
) -> TubularDeltaTerm:
    """h = σ(z)·(α δ + β δ')(s)·z, with α, β polynomials in s − t0."""
    delta = delta or make_delta(chart.t0, 0.5 * chart.half_width)
    lower, upper = delta.support
    if lower < chart.t0 - chart.half_width or upper > chart.t0 + chart.half_width:
        raise ChartFailureError(
            f"Delta support [{lower:.6g}, {upper:.6g}] exceeds the chart time range"
        )
    profile = DeltaProfile(
        center=chart.t0,
        coefficients=[_as_polynomial(alpha), _as_polynomial(beta)],
        deltas=[delta.derivative(0), delta.derivative(1)],
    )
    return TubularDeltaTerm(chart=chart, profile=profile, power=1, cutoff=_cutoff(cutoff_radius))


def _breakpoints(term: PerturbationTerm) -> Tuple[float, ...]:
    return tuple(getattr(term, "breakpoints", ()))


def B_of_h(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    h: PerturbationTerm,
    co_integrate: bool = True,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    """−dψ_T ∫₀ᵀ (dψ_t)⁻¹ b_h(t) dt with b_h = (0, −∇h(x(t)))."""
    tolerances = resolve(tolerances)
    trajectory = integrate_flow(sys, orbit.theta0, orbit.T_min, tol=tolerances.shooting_tol)

    def forcing(t):
        gradient = h.value_and_gradient(trajectory.state_at(t)[:2])[1]
        return np.concatenate([np.zeros(2), -gradient])

    return -forced_variational(
        sys,
        orbit.theta0,
        orbit.T_min,
        forcing,
        tol=tolerances.step_tol,
        breakpoints=_breakpoints(h),
        co_integrate=co_integrate,
        tolerances=tolerances,
    )


def limit_B_formulas(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t0: float,
    alpha1: float,
    beta1: float,
    beta1_dot: float,
    chart: Optional[TubularChart] = None,
    tolerances: Optional[Tolerances] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Limits of B(h_α) and B(h_β) as the mollifier width goes to zero.

    v = (0, ∇z) at x(t0); without a chart ∇z is the unit normal to ẋ(t0)
    and is taken constant along the orbit.
    """
    tolerances = resolve(tolerances)
    solution = variational_solution(
        sys, orbit.theta0, orbit.T_min, tolerances.shooting_tol, with_inverse=True
    )
    state = solution.state(t0)
    velocity = sys.field(state)[:2]
    if chart is None:
        normal = np.array([-velocity[1], velocity[0]]) / np.linalg.norm(velocity)
        hess_z = np.zeros((2, 2))
    else:
        _, z_jet = chart.jets(state[:2])
        normal, hess_z = z_jet.grad, z_jet.hess
    v = np.concatenate([np.zeros(2), normal])
    v_dot = np.concatenate([np.zeros(2), hess_z @ velocity])
    A = J4 @ sys.hamiltonian_jet(state).hessian()
    transport = solution.end_matrix @ solution.inverse_matrix(t0)
    B_alpha = transport @ (alpha1 * v)
    B_beta = transport @ (beta1 * (A @ v) - beta1 * v_dot - beta1_dot * v)
    return B_alpha, B_beta


def b_complementarity(
    sys: MechanicalSystem, orbit: PeriodicOrbit, vectors: Sequence[np.ndarray]
) -> ComplementarityReport:
    """Tangency to the level, rank of the 𝒲₁ components and distance from X^H."""
    theta = orbit.theta0.as_array()
    gradient = normal_field(sys, theta)
    field = hamiltonian_field(sys, theta)
    columns = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
    tangency = [
        abs(float(gradient @ column)) / max(float(np.linalg.norm(column)), 1e-300)
        for column in columns.T
    ]
    components = np.linalg.solve(orbit.frame.matrix, columns)[[1, 3], :]
    singular = np.linalg.svd(components, compute_uv=False)
    rank = int(np.sum(singular > 1e-8 * max(1.0, float(singular[0]))))
    solution = np.linalg.lstsq(columns, field, rcond=None)[0]
    residual = float(np.linalg.norm(columns @ solution - field) / np.linalg.norm(field))
    return ComplementarityReport(
        tangency=tangency,
        gram_rank=rank,
        gram_singular_values=singular,
        non_containment_residual=residual,
    )


def b_convergence(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t0: float,
    widths: Sequence[float],
    alpha: float = 1.0,
    beta: float = 1.0,
    tolerances: Optional[Tolerances] = None,
) -> pd.DataFrame:
    """Gap between B(h) and its limit formula for a sequence of widths."""
    tolerances = resolve(tolerances)
    chart = build_tubular_chart(sys, orbit, t0, 2.0 * max(widths), tolerances)
    B_alpha, B_beta = limit_B_formulas(sys, orbit, t0, alpha, beta, 0.0, chart, tolerances)
    rows = []
    for width in widths:
        delta = make_delta(t0, width)
        measured_alpha = B_of_h(sys, orbit, build_h_alpha_beta(chart, alpha, 0.0, delta), tolerances=tolerances)
        measured_beta = B_of_h(sys, orbit, build_h_alpha_beta(chart, 0.0, beta, delta), tolerances=tolerances)
        rows.append(
            {
                "width": width,
                "alpha_error": float(np.linalg.norm(measured_alpha - B_alpha)),
                "beta_error": float(np.linalg.norm(measured_beta - B_beta)),
                "alpha_norm": float(np.linalg.norm(B_alpha)),
                "beta_norm": float(np.linalg.norm(B_beta)),
            }
        )
    return pd.DataFrame(rows)


def b_convergence_rate(frame: pd.DataFrame, tolerances: Optional[Tolerances] = None) -> Optional[float]:
    """Observed order of the B(h) limit error in the width; None once it is at the floor.

    The floor is ``tangency_tol`` scaled by the size of the limit vectors.
    """
    tolerances = resolve(tolerances)
    errors = (frame["alpha_error"] + frame["beta_error"]).to_numpy()
    scale = max(1.0, float((frame["alpha_norm"] + frame["beta_norm"]).max()))
    return loglog_rate(frame["width"].to_numpy(), errors, tolerances.tangency_tol * scale)


def abc_generators(a: float, b: float, c: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Â, B̂, Ĉ: single entry −a, −b, −c at row p2, column x2."""
    out = []
    for value in (a, b, c):
        matrix = np.zeros((4, 4))
        matrix[3, 1] = -value
        out.append(matrix)
    return tuple(out)


def _bracket(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return P @ Q - Q @ P


def commutator_Z(
    A_hat: np.ndarray,
    B_hat: np.ndarray,
    C_hat: np.ndarray,
    JH: np.ndarray,
    JH_dot: np.ndarray,
) -> np.ndarray:
    """𝒵 = Â − [B̂, J𝓗] + [Ĉ, J𝓗̇] + [[Ĉ, J𝓗], J𝓗]."""
    return A_hat - _bracket(B_hat, JH) + _bracket(C_hat, JH_dot) + _bracket(_bracket(C_hat, JH), JH)


class AdaptedFrame(ArrayModel):
    """Linear symplectic coordinates at γ(t1) in which X = ∂/∂x̂1.

    G = [[A⁻¹, 0], [S·A⁻¹, Aᵀ]] with A the chart differential and S the
    symmetric matrix with S·ẋ = ṗ, so {δp̂ = 0} is a Lagrangian plane
    containing the flow direction.
    """

    t1: float
    state: np.ndarray
    chart: TubularChart
    G: np.ndarray
    hessian: np.ndarray
    hessian_dot: np.ndarray
    flow_to_t1: np.ndarray

    @property
    def JH(self) -> np.ndarray:
        return J4 @ self.hessian

    @property
    def JH_dot(self) -> np.ndarray:
        return J4 @ self.hessian_dot


def build_adapted_frame(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    width: Optional[float] = None,
    chart: Optional[TubularChart] = None,
    tolerances: Optional[Tolerances] = None,
) -> AdaptedFrame:
    tolerances = resolve(tolerances)
    width = width or tolerances.delta_width_factor * orbit.T_min
    chart = chart or build_tubular_chart(sys, orbit, t1, 2.0 * width, tolerances)
    state, flow_to_t1 = flow_differential(sys, orbit.theta0.as_array(), t1, tolerances.shooting_tol)
    A = chart.differential(state[:2])
    if abs(np.linalg.det(A)) <= tolerances.chart_tol:
        raise ChartFailureError(
            f"Projection of the adapted plane degenerates at t1={t1:.6g}; shift t1"
        )
    field = sys.field(state)
    x_dot, p_dot = field[:2], field[2:]
    speed2 = float(x_dot @ x_dot)
    S = (np.outer(p_dot, x_dot) + np.outer(x_dot, p_dot)) / speed2 - float(
        p_dot @ x_dot
    ) * np.outer(x_dot, x_dot) / speed2**2
    A_inv = np.linalg.inv(A)
    G = np.block([[A_inv, np.zeros((2, 2))], [S @ A_inv, A.T]])
    defect = symplectic_defect(G)
    if defect > 1e-8 * max(1.0, float(np.max(np.abs(G))) ** 2):
        logger.warning(f"Adapted frame symplectic defect {defect:.3e}")
    flow_hat = np.linalg.solve(G, field)
    if np.max(np.abs(flow_hat - np.eye(4)[0])) > 1e-6:
        logger.warning(f"Flow direction in adapted frame is {flow_hat}, expected e1")
    jet = sys.hamiltonian_jet(state)
    hessian_dot = np.einsum("ijk,k->ij", jet.third_tensor(), field)
    return AdaptedFrame(
        t1=t1,
        state=state,
        chart=chart,
        G=G,
        hessian=G.T @ jet.hessian() @ G,
        hessian_dot=G.T @ hessian_dot @ G,
        flow_to_t1=flow_to_t1,
    )


def pi_of_Z_from_hessians(
    hessian: np.ndarray, hessian_dot: np.ndarray, a: float, b: float, c: float
) -> np.ndarray:
    """Closed-form π(𝒵) from adapted-frame second derivatives (order x1, x2, p1, p2)."""
    H, Hd = hessian, hessian_dot
    p2p2, x2p2, p1p2 = H[3, 3], H[1, 3], H[2, 3]
    x1x2, x2x2, x2p1, x1p2 = H[0, 1], H[1, 1], H[1, 2], H[0, 3]
    z11 = -b * p2p2 + 2 * c * p2p2 * x2p2 + c * Hd[3, 3]
    z12 = 2 * c * p2p2**2
    z21 = (
        -a
        + 2 * b * x2p2
        + 2 * c * p1p2 * x1x2
        + 2 * c * p2p2 * x2x2
        - 2 * c * x2p1 * x1p2
        - 4 * c * x2p2**2
        - 2 * c * Hd[1, 3]
    )
    z22 = b * p2p2 - 2 * c * p2p2 * x2p2 - c * Hd[3, 3]
    return np.array([[z11, z12], [z21, z22]])


def pi_of_Z(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    a: float,
    b: float,
    c: float,
    frame: Optional[AdaptedFrame] = None,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    frame = frame or build_adapted_frame(sys, orbit, t1, tolerances=tolerances)
    return pi_of_Z_from_hessians(frame.hessian, frame.hessian_dot, a, b, c)


def pi_of_Z_check(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    a: float,
    b: float,
    c: float,
    frame: Optional[AdaptedFrame] = None,
    tolerances: Optional[Tolerances] = None,
) -> PiZCheck:
    frame = frame or build_adapted_frame(sys, orbit, t1, tolerances=tolerances)
    printed = pi_of_Z_from_hessians(frame.hessian, frame.hessian_dot, a, b, c)
    commutator = project_pi(commutator_Z(*abc_generators(a, b, c), frame.JH, frame.JH_dot))
    return PiZCheck(
        coefficients=(a, b, c),
        printed=printed,
        commutator=commutator,
        trace=float(np.trace(printed)),
        discrepancy=float(np.max(np.abs(printed - commutator))),
    )


def ds_matrix_from_hessians(hessian: np.ndarray, hessian_dot: np.ndarray) -> np.ndarray:
    """Columns: (z11, z12, z21) for unit a, b and c."""
    columns = []
    for a, b, c in np.eye(3):
        z = pi_of_Z_from_hessians(hessian, hessian_dot, a, b, c)
        columns.append([z[0, 0], z[0, 1], z[1, 0]])
    return np.array(columns).T


def rank_of(matrix: np.ndarray) -> DSRank:
    singular = np.linalg.svd(matrix, compute_uv=False)
    rank = int(np.sum(singular > 1e-10 * max(1.0, float(singular[0]))))
    return DSRank(matrix=matrix, rank=rank, singular_values=singular)


def dS_rank(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    frame: Optional[AdaptedFrame] = None,
    tolerances: Optional[Tolerances] = None,
) -> DSRank:
    frame = frame or build_adapted_frame(sys, orbit, t1, tolerances=tolerances)
    return rank_of(ds_matrix_from_hessians(frame.hessian, frame.hessian_dot))


def build_abc_potential(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    a: float,
    b: float,
    c: float,
    width: Optional[float] = None,
    cutoff_radius: float = 0.1,
    chart: Optional[TubularChart] = None,
    tolerances: Optional[Tolerances] = None,
) -> TubularDeltaTerm:
    """σ(z)·(a δ + b δ' + c δ'')(s)·½z² around x(t1)."""
    tolerances = resolve(tolerances)
    width = width or tolerances.delta_width_factor * orbit.T_min
    chart = chart or build_tubular_chart(sys, orbit, t1, 2.0 * width, tolerances)
    delta = make_delta(t1, width)
    profile = DeltaProfile(
        center=t1,
        coefficients=[_as_polynomial(value) for value in (a, b, c)],
        deltas=[delta.derivative(order) for order in (0, 1, 2)],
    )
    return TubularDeltaTerm(chart=chart, profile=profile, power=2, cutoff=_cutoff(cutoff_radius))


def perturbed_monodromy(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    term: PerturbationTerm,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    tolerances = resolve(tolerances)
    _, monodromy = flow_differential(
        add_potential(sys, term),
        orbit.theta0.as_array(),
        orbit.T_min,
        tolerances.shooting_tol,
        _breakpoints(term),
    )
    return monodromy


def predicted_poincare_derivative(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    a: float,
    b: float,
    c: float,
    frame: Optional[AdaptedFrame] = None,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    """π(E⁻¹·M·Φ(t1)⁻¹·G·𝒵·G⁻¹·Φ(t1)·E): d(dP)/dl of H + l·f_abc at l = 0."""
    frame = frame or build_adapted_frame(sys, orbit, t1, tolerances=tolerances)
    Z = commutator_Z(*abc_generators(a, b, c), frame.JH, frame.JH_dot)
    conjugated = frame.G @ Z @ np.linalg.inv(frame.G)
    change = orbit.monodromy.matrix @ np.linalg.solve(frame.flow_to_t1, conjugated @ frame.flow_to_t1)
    return project_pi(frame_expansion(orbit.frame.matrix, change))


def measured_poincare_derivative(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    term: PerturbationTerm,
    step: float = 1e-4,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    """Central difference of dP for H ± step·f in the unperturbed frame."""
    blocks = [
        poincare_block(orbit.frame, perturbed_monodromy(sys, orbit, term.scaled(sign * step), tolerances))
        for sign in (1.0, -1.0)
    ]
    return (blocks[0] - blocks[1]) / (2.0 * step)


def root_of_unity_score(dP: np.ndarray, order: int) -> float:
    """min over m ≤ order of min |λ^m − 1|."""
    return min(root_of_unity_distance(dP, m)[0] for m in range(1, order + 1))


def select_abc_candidates(
    dP: np.ndarray,
    derivatives: Sequence[np.ndarray],
    order: int,
    budget: float,
) -> List[Tuple[Tuple[float, float, float], float]]:
    """Coefficient candidates ranked by the linearized score of dP + Σ coef·D."""
    candidates = []
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=3):
        if not any(signs):
            continue
        for magnitude in CANDIDATE_MAGNITUDES:
            coefficients = tuple(float(s * magnitude * budget) for s in signs)
            predicted = dP + sum(x * D for x, D in zip(coefficients, derivatives))
            candidates.append((coefficients, root_of_unity_score(predicted, order)))
    return sorted(candidates, key=lambda item: -item[1])


def perturb_to_nondegenerate(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    m: int,
    coefficient_budget: float,
    width: Optional[float] = None,
    verify: int = 6,
    tolerances: Optional[Tolerances] = None,
) -> NondegeneracyResult:
    """Small (a, b, c) potential making the orbit nondegenerate of every order ≤ 2m."""
    tolerances = resolve(tolerances)
    order = 2 * m
    margin = tolerances.nondegeneracy_margin
    score = root_of_unity_score(orbit.dP, order)
    if score > margin:
        logger.info(f"Orbit already {order}-elementary (score {score:.3e}); no perturbation")
        return NondegeneracyResult(
            term=TrigPolynomialTerm(),
            t1=0.0,
            coefficients=(0.0, 0.0, 0.0),
            width=0.0,
            orbit=orbit,
            verdicts=classify_nondegeneracy(orbit, order, tolerances),
            score=score,
            order=order,
        )
    width = width or tolerances.delta_width_factor * orbit.T_min
    best: Optional[NondegeneracyResult] = None
    for fraction in T1_FRACTIONS:
        t1 = fraction * orbit.T_min
        try:
            frame = build_adapted_frame(sys, orbit, t1, width, tolerances=tolerances)
        except ChartFailureError as e:
            logger.info(f"Skipping t1={t1:.6g}: {str(e)}")
            continue
        derivatives = [
            predicted_poincare_derivative(sys, orbit, t1, *unit, frame=frame) for unit in np.eye(3)
        ]
        ranked = select_abc_candidates(orbit.dP, derivatives, order, coefficient_budget)
        for coefficients, predicted in ranked[:verify]:
            term = build_abc_potential(
                sys, orbit, t1, *coefficients, width=width, chart=frame.chart, tolerances=tolerances
            )
            new_orbit = build_orbit(
                add_potential(sys, term),
                orbit.k,
                orbit.theta0.as_array(),
                orbit.T_min,
                m_max=order,
                tolerances=tolerances,
                breakpoints=term.breakpoints,
            )
            achieved = root_of_unity_score(new_orbit.dP, order)
            logger.debug(
                f"t1={t1:.4f} coefficients={coefficients}: predicted {predicted:.3e}, achieved {achieved:.3e}"
            )
            result = NondegeneracyResult(
                term=term,
                t1=t1,
                coefficients=coefficients,
                width=width,
                orbit=new_orbit,
                verdicts=new_orbit.verdicts,
                score=achieved,
                order=order,
            )
            if best is None or achieved > best.score:
                best = result
            if achieved > margin and new_orbit.residual <= tolerances.closure_tol:
                logger.info(
                    f"Nondegenerate up to order {order} with {coefficients} at t1={t1:.6g} "
                    f"(score {achieved:.3e})"
                )
                return result
    raise NoImprovementError(
        f"No coefficients within budget {coefficient_budget} reach score {margin}",
        best=best.report() if best is not None else None,
    )


def sweep_coefficients(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    t1: float,
    direction: Tuple[float, float, float],
    amplitudes: Sequence[float],
    width: Optional[float] = None,
    tolerances: Optional[Tolerances] = None,
) -> pd.DataFrame:
    """Multipliers of dP along l·(a, b, c) for each amplitude l."""
    tolerances = resolve(tolerances)
    width = width or tolerances.delta_width_factor * orbit.T_min
    chart = build_tubular_chart(sys, orbit, t1, 2.0 * width, tolerances)
    rows = []
    for amplitude in amplitudes:
        coefficients = tuple(amplitude * value for value in direction)
        term = build_abc_potential(sys, orbit, t1, *coefficients, width=width, chart=chart, tolerances=tolerances)
        dP = poincare_block(orbit.frame, perturbed_monodromy(sys, orbit, term, tolerances))
        eigenvalues = np.sort_complex(np.linalg.eigvals(dP).astype(complex))
        rows.append(
            {
                "amplitude": amplitude,
                "a": coefficients[0],
                "b": coefficients[1],
                "c": coefficients[2],
                "trace": float(np.trace(dP)),
                "lambda1_real": eigenvalues[0].real,
                "lambda1_imag": eigenvalues[0].imag,
                "lambda2_real": eigenvalues[1].real,
                "lambda2_imag": eigenvalues[1].imag,
            }
        )
    return pd.DataFrame(rows)
