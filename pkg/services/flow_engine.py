"""Hamiltonian, normal, variational and forced-variational flows.

All integrations use an adaptive eighth-order Runge-Kutta scheme (DOP853)
with dense output. Symplecticity and energy conservation are monitored and
logged, never enforced.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from models.flow import SymplecticMatrix4, Trajectory
from models.phase import PhasePoint, StateLike, as_state
from models.system import MechanicalSystem
from models.tolerances import Tolerances, resolve
from utils.errors import AccuracyError, InvalidInputError, StiffnessError
from utils.symplectic import J4, symplectic_defect

logger = logging.getLogger(__name__)

Forcing = Callable[[float], np.ndarray]


def hamiltonian_field(sys: MechanicalSystem, theta: StateLike) -> np.ndarray:
    """X^H = (H_p, −H_x) = J·∇H."""
    return sys.field(as_state(theta))


def normal_field(sys: MechanicalSystem, theta: StateLike) -> np.ndarray:
    """Y^H = ∇H = (H_x, H_p)."""
    state = as_state(theta)
    field = sys.field(state)
    return np.concatenate([-field[2:], field[:2]])


def _solve(rhs, t_span, y0, tol, dense=False, events=None, max_step=np.inf):
    solution = solve_ivp(
        rhs,
        t_span,
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol,
        dense_output=dense,
        events=events,
        max_step=max_step,
    )
    if solution.status == -1:
        raise StiffnessError(
            f"Integration failed at t={solution.t[-1]:.6g} "
            f"(span {t_span[0]:.6g}..{t_span[1]:.6g}): {solution.message}"
        )
    return solution


def _flow_rhs(sys: MechanicalSystem):
    def rhs(_t, y):
        return sys.field(y)

    return rhs


def _variational_rhs(sys: MechanicalSystem, with_inverse: bool, forcing: Optional[Forcing] = None):
    def rhs(t, y):
        jet = sys.hamiltonian_jet(y[:4])
        gradient = jet.gradient()
        A = J4 @ jet.hessian()
        Phi = y[4:20].reshape(4, 4)
        parts = [J4 @ gradient, (A @ Phi).ravel()]
        if with_inverse:
            W = y[20:36].reshape(4, 4)
            parts.append((-W @ A).ravel())
            if forcing is not None:
                parts.append(W @ forcing(t))
        return np.concatenate(parts)

    return rhs


def integrate_flow(
    sys: MechanicalSystem,
    theta0: StateLike,
    T: float,
    tol: Optional[float] = None,
    tolerances: Optional[Tolerances] = None,
) -> Trajectory:
    """Dense-output trajectory of ψ_t on [0, T] (T may be negative)."""
    tolerances = resolve(tolerances)
    tol = tolerances.step_tol if tol is None else tol
    if not np.isfinite(T) or tol <= 0:
        raise InvalidInputError(f"Need finite T and positive tol, got T={T}, tol={tol}")
    state = as_state(theta0)
    if T == 0:
        energy = sys.hamiltonian_value(state)
        return Trajectory(
            times=np.array([0.0]), states=state[None, :], energies=np.array([energy])
        )
    solution = _solve(_flow_rhs(sys), (0.0, T), state, tol, dense=True)
    states = solution.y.T
    energies = np.array([sys.hamiltonian_value(s) for s in states])
    trajectory = Trajectory(
        times=solution.t, states=states, energies=energies, solution=solution.sol
    )
    limit = tolerances.tol_energy * max(1.0, abs(energies[0]))
    if trajectory.energy_drift > limit:
        logger.warning(
            f"Energy drift {trajectory.energy_drift:.3e} exceeds {limit:.1e} over T={T}"
        )
    return trajectory


def integrate_until(
    sys: MechanicalSystem,
    theta0: StateLike,
    event: Callable[[float, np.ndarray], float],
    max_time: float,
    tol: Optional[float] = None,
    tolerances: Optional[Tolerances] = None,
) -> Optional[Tuple[float, np.ndarray]]:
    """First zero of ``event`` along ψ_t(θ0) for t between 0 and ``max_time``.

    ``max_time`` may be negative for backward integration. Returns None when
    the event does not fire.
    """
    tolerances = resolve(tolerances)
    tol = tolerances.step_tol if tol is None else tol

    def terminal(t, y):
        return event(t, y)

    terminal.terminal = True
    solution = _solve(_flow_rhs(sys), (0.0, max_time), as_state(theta0), tol, events=[terminal])
    if solution.status != 1 or solution.t_events[0].size == 0:
        return None
    return float(solution.t_events[0][0]), solution.y_events[0][0]


class VariationalSolution:
    """Co-integrated state, flow differential Φ(t) and optionally W(t) = Φ(t)⁻¹."""

    def __init__(self, solution, duration: float, with_inverse: bool, y0: np.ndarray):
        self._solution = solution
        self.duration = duration
        self.with_inverse = with_inverse
        self._y0 = y0

    def _y(self, t: float) -> np.ndarray:
        if self._solution is None:
            return self._y0
        return self._solution(t)

    def state(self, t: float) -> np.ndarray:
        return self._y(t)[:4]

    def flow_matrix(self, t: float) -> np.ndarray:
        return self._y(t)[4:20].reshape(4, 4)

    def inverse_matrix(self, t: float) -> np.ndarray:
        if not self.with_inverse:
            return np.linalg.inv(self.flow_matrix(t))
        return self._y(t)[20:36].reshape(4, 4)

    @property
    def end_state(self) -> np.ndarray:
        return self.state(self.duration)

    @property
    def end_matrix(self) -> np.ndarray:
        return self.flow_matrix(self.duration)


def variational_solution(
    sys: MechanicalSystem,
    theta0: StateLike,
    T: float,
    tol: float,
    with_inverse: bool = False,
) -> VariationalSolution:
    state = as_state(theta0)
    pieces = [state, np.eye(4).ravel()]
    if with_inverse:
        pieces.append(np.eye(4).ravel())
    y0 = np.concatenate(pieces)
    if T == 0:
        return VariationalSolution(None, 0.0, with_inverse, y0)
    solution = _solve(_variational_rhs(sys, with_inverse), (0.0, T), y0, tol, dense=True)
    return VariationalSolution(solution.sol, T, with_inverse, y0)


def flow_differential(
    sys: MechanicalSystem,
    state: np.ndarray,
    T: float,
    tol: float,
    breakpoints: Sequence[float] = (),
) -> Tuple[np.ndarray, np.ndarray]:
    """(ψ_T(θ), dψ_T) as raw arrays without dense output.

    ``breakpoints`` restart the integrator so narrow potential supports are
    not stepped over.
    """
    y = np.concatenate([state, np.eye(4).ravel()])
    if T == 0:
        return state.copy(), np.eye(4)
    rhs = _variational_rhs(sys, False)
    edges = _segments(T, breakpoints) if T > 0 else np.array([0.0, T])
    for start, stop in zip(edges[:-1], edges[1:]):
        y = _solve(rhs, (start, stop), y, tol).y[:, -1]
    return y[:4], y[4:20].reshape(4, 4)


def integrate_variational(
    sys: MechanicalSystem,
    theta0: StateLike,
    T: float,
    tol: Optional[float] = None,
    tolerances: Optional[Tolerances] = None,
) -> Tuple[PhasePoint, SymplecticMatrix4]:
    """ψ_T(θ0) and dψ_T from the variational equation ξ̇ = J·Hess H·ξ."""
    tolerances = resolve(tolerances)
    tol = tolerances.step_tol if tol is None else tol
    end, matrix = flow_differential(sys, as_state(theta0), T, tol)
    defect = symplectic_defect(matrix)
    if defect > tolerances.tol_symp:
        logger.warning(f"Flow differential symplectic defect {defect:.3e} over T={T}")
    return PhasePoint.from_array(end), SymplecticMatrix4(matrix=matrix)


def integrate_normal_flow(
    sys: MechanicalSystem,
    theta0: StateLike,
    s: float,
    tol: Optional[float] = None,
    tolerances: Optional[Tolerances] = None,
) -> PhasePoint:
    """ψ_s^⊥(θ0): flow of the gradient field ∇H for |s| < ε_normal."""
    tolerances = resolve(tolerances)
    tol = tolerances.step_tol if tol is None else tol
    if not abs(s) < tolerances.eps_normal:
        raise InvalidInputError(
            f"Normal-flow time {s} outside (−{tolerances.eps_normal}, {tolerances.eps_normal})"
        )
    state = as_state(theta0)
    if s == 0:
        return PhasePoint.from_array(state)
    solution = _solve(lambda _t, y: normal_field(sys, y), (0.0, s), state, tol)
    return PhasePoint.from_array(solution.y[:, -1])


def normal_energy_profile(
    sys: MechanicalSystem,
    theta0: StateLike,
    s_values: Sequence[float],
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    """e_θ(s) = H(ψ_s^⊥(θ)) at the requested normal times."""
    return np.array(
        [
            sys.hamiltonian_value(
                integrate_normal_flow(sys, theta0, s, tolerances=tolerances).as_array()
            )
            for s in s_values
        ]
    )


def _segments(T: float, breakpoints: Sequence[float]) -> np.ndarray:
    inner = [b for b in breakpoints if 0.0 < b < T]
    return np.unique(np.concatenate([[0.0], inner, [T]]))


def _forced_co_integrated(sys, state, T, forcing, tol, breakpoints):
    y = np.concatenate([state, np.eye(4).ravel(), np.eye(4).ravel(), np.zeros(4)])
    rhs = _variational_rhs(sys, True, forcing)
    edges = _segments(T, breakpoints)
    for start, stop in zip(edges[:-1], edges[1:]):
        y = _solve(rhs, (start, stop), y, tol).y[:, -1]
    return y[4:20].reshape(4, 4) @ y[36:40]


def _forced_by_inversion(sys, state, T, forcing, tol, breakpoints):
    edges = _segments(T, breakpoints)
    solution = variational_solution(sys, state, T, tol)
    total = np.zeros(4)
    for start, stop in zip(edges[:-1], edges[1:]):
        piece, _ = quad_vec(
            lambda t: np.linalg.solve(solution.flow_matrix(t), forcing(t)),
            start,
            stop,
            epsabs=tol,
            epsrel=tol,
        )
        total += piece
    return solution.end_matrix @ total


def forced_variational(
    sys: MechanicalSystem,
    theta0: StateLike,
    T: float,
    forcing: Forcing,
    tol: Optional[float] = None,
    breakpoints: Sequence[float] = (),
    co_integrate: bool = True,
    check_convergence: bool = False,
    tolerances: Optional[Tolerances] = None,
) -> np.ndarray:
    """dψ_T ∫₀ᵀ (dψ_t)⁻¹ b(t) dt.

    The inverse differential comes from the adjoint equation Ẇ = −W·J·Hess H
    integrated alongside the state; ``co_integrate=False`` instead solves with
    Φ(t) at quadrature nodes. ``breakpoints`` split the integration where the
    forcing has narrow support or kinks.
    """
    tolerances = resolve(tolerances)
    tol = tolerances.step_tol if tol is None else tol
    if T == 0:
        return np.zeros(4)
    if T < 0:
        raise InvalidInputError(f"Forced variational needs T > 0, got {T}")
    state = as_state(theta0)
    method = _forced_co_integrated if co_integrate else _forced_by_inversion
    result = method(sys, state, T, forcing, tol, breakpoints)
    if check_convergence:
        refined = method(sys, state, T, forcing, tol * 1e-2, breakpoints)
        change = float(np.max(np.abs(refined - result)))
        limit = tolerances.forcing_convergence_tol * max(1.0, float(np.max(np.abs(refined))))
        if change > limit:
            raise AccuracyError(
                f"Forced variational changed by {change:.3e} under refinement (limit {limit:.1e})"
            )
        result = refined
    return result
