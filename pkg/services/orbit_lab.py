"""Periodic orbits on a fixed energy level.

Newton shooting on the closure residual, minimal periods, the symplectic frame
built from the Hamiltonian and normal fields, the restricted Poincaré
derivative and its nondegeneracy and stability classification, grid-seeded
orbit scans, level regularity and vertical twist times.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar, root

from models.flow import SymplecticMatrix4
from models.orbit import (
    LevelCheck,
    OrbitScan,
    PeriodicOrbit,
    RhoValue,
    Stability,
    SymplecticFrame,
    TwistResult,
    Verdict,
)
from models.phase import PhasePoint, StateLike, as_state
from models.system import MechanicalSystem
from models.tolerances import Tolerances, resolve
from services.flow_engine import (
    flow_differential,
    hamiltonian_field,
    integrate_flow,
    integrate_normal_flow,
    normal_field,
    variational_solution,
)
from utils.errors import (
    DegenerateGuessError,
    InvalidInputError,
    NoOrbitError,
    SingularFrameError,
)
from utils.symplectic import (
    J4,
    LEVEL_RESTRICTED,
    frame_expansion,
    multiplicity_of_one,
    project_pi,
    sp_hat_defect,
)
from utils.torus import TWO_PI, phase_difference, phase_distance, wrap_angle

logger = logging.getLogger(__name__)

DEFAULT_M_MAX = 12


def rho_eval(
    sys: MechanicalSystem,
    k: float,
    theta: StateLike,
    t: float,
    s: float,
    tolerances: Optional[Tolerances] = None,
) -> RhoValue:
    """ρ(θ, t, s) = (ψ_s^⊥(θ), ψ_t(θ), H(θ) − k)."""
    tolerances = resolve(tolerances)
    state = as_state(theta)
    normal_image = integrate_normal_flow(sys, state, s, tolerances=tolerances)
    flow_image = integrate_flow(sys, state, t, tol=tolerances.shooting_tol).endpoint
    energy = sys.hamiltonian_value(state)
    normal_energy = sys.hamiltonian_value(normal_image.as_array())
    if s != 0:
        midpoint = integrate_normal_flow(sys, state, 0.5 * s, tolerances=tolerances)
        profile = np.array([energy, sys.hamiltonian_value(midpoint.as_array()), normal_energy])
        if not np.all(np.sign(s) * np.diff(profile) > 0):
            logger.warning(f"Normal-flow energy not monotone on [0, {s}] at {state}")
    return RhoValue(
        normal_image=normal_image,
        flow_image=flow_image,
        level_defect=energy - k,
        normal_level_defect=normal_energy - k,
    )


def symplectic_frame(
    sys: MechanicalSystem, theta: StateLike, tolerances: Optional[Tolerances] = None
) -> SymplecticFrame:
    """u1 = X, u1s = −Y/‖Y‖², (u2, u2s = J·u2) spanning the ω-complement 𝒲₁."""
    tolerances = resolve(tolerances)
    state = as_state(theta)
    X = hamiltonian_field(sys, state)
    Y = normal_field(sys, state)
    norm2 = float(Y @ Y)
    if norm2 <= tolerances.frame_tol**2:
        raise SingularFrameError(f"∇H vanishes at {state} (‖∇H‖² = {norm2:.3e})")
    unit_x = X / np.sqrt(norm2)
    unit_y = Y / np.sqrt(norm2)
    # X ⊥ Y and J preserves the complement, so a unit vector orthogonal to both
    # spans 𝒲₁ together with its J-image.
    candidates = np.eye(4)
    residuals = candidates - np.outer(candidates @ unit_x, unit_x) - np.outer(candidates @ unit_y, unit_y)
    best = int(np.argmax(np.linalg.norm(residuals, axis=1)))
    u2 = residuals[best] / np.linalg.norm(residuals[best])
    return SymplecticFrame(
        base_point=PhasePoint.from_array(state),
        u1=X,
        u2=u2,
        u1s=-Y / norm2,
        u2s=J4 @ u2,
    )


def poincare_block(frame: SymplecticFrame, monodromy: np.ndarray) -> np.ndarray:
    return project_pi(frame_expansion(frame.matrix, monodromy))


def restricted_poincare(orbit: PeriodicOrbit) -> np.ndarray:
    """dP: the 𝒲₁ block of the monodromy expressed in the orbit's frame."""
    return poincare_block(orbit.frame, orbit.monodromy.matrix)


def classify_stability(
    orbit: Union[PeriodicOrbit, np.ndarray], tol: Optional[float] = None
) -> Stability:
    dP = orbit.dP if isinstance(orbit, PeriodicOrbit) else np.asarray(orbit)
    tol = resolve(None).tol_stability if tol is None else tol
    trace = abs(float(np.trace(dP)))
    if trace > 2.0 + tol:
        return Stability.HYPERBOLIC
    if trace < 2.0 - tol:
        return Stability.ELLIPTIC
    return Stability.PARABOLIC


def root_of_unity_distance(dP: np.ndarray, m: int):
    """min over eigenvalues λ of |λ^m − 1|, with the minimizing eigenvalue."""
    eigenvalues = np.linalg.eigvals(dP)
    distances = np.abs(eigenvalues.astype(complex) ** m - 1.0)
    index = int(np.argmin(distances))
    return float(distances[index]), complex(eigenvalues[index])


def is_n_elementary(dP: np.ndarray, order: int, tol: Optional[float] = None) -> bool:
    """No eigenvalue of dP is a root of unity of order ≤ ``order``."""
    tol = resolve(None).tol_root if tol is None else tol
    return all(root_of_unity_distance(dP, m)[0] > tol for m in range(1, order + 1))


def classify_nondegeneracy(
    orbit: PeriodicOrbit, m_max: int = DEFAULT_M_MAX, tolerances: Optional[Tolerances] = None
) -> Dict[int, Verdict]:
    tolerances = resolve(tolerances)
    verdicts = {}
    for m in range(1, m_max + 1):
        distance, eigenvalue = root_of_unity_distance(orbit.dP, m)
        nondegenerate = distance > tolerances.tol_root
        powered = frame_expansion(
            orbit.frame.matrix, np.linalg.matrix_power(orbit.monodromy.matrix, m)
        )
        level_block = powered[np.ix_(LEVEL_RESTRICTED, LEVEL_RESTRICTED)]
        multiplicity = multiplicity_of_one(level_block, tolerances.tol_root)
        root_index = None
        if not nondegenerate:
            root_index = int(round(m * np.angle(eigenvalue) / TWO_PI)) % m
        verdicts[m] = Verdict(
            m=m,
            nondegenerate=nondegenerate,
            eigenvalue_real=eigenvalue.real,
            eigenvalue_imag=eigenvalue.imag,
            root_index=root_index,
            distance_to_root=distance,
            multiplicity_of_one=multiplicity,
            agrees=nondegenerate == (multiplicity == 1),
        )
        if not verdicts[m].agrees:
            logger.warning(
                f"Order {m}: eigenvalue test and multiplicity cross-check disagree "
                f"(|λ^m − 1| = {distance:.3e}, multiplicity {multiplicity})"
            )
    return verdicts


def charpoly_factorization_residual(orbit: PeriodicOrbit, m: int = 1) -> float:
    """Relative coefficient gap between p_{dψ^m} and (λ − 1)²·p_{dP^m}."""
    full = np.poly(np.linalg.matrix_power(orbit.monodromy.matrix, m))
    expected = np.polymul([1.0, -2.0, 1.0], np.poly(np.linalg.matrix_power(orbit.dP, m)))
    return float(np.max(np.abs(full - expected)) / max(1.0, float(np.max(np.abs(full)))))


def _closure(sys: MechanicalSystem, state: np.ndarray, t: float, tol: float) -> float:
    end = integrate_flow(sys, state, t, tol=tol).states[-1]
    return phase_distance(end, state)


def _minimal_period(
    sys: MechanicalSystem, state: np.ndarray, T: float, tolerances: Tolerances
) -> float:
    cap = tolerances.max_period_divisor
    period = T
    reduced = True
    while reduced:
        reduced = False
        for divisor in range(cap, 1, -1):
            candidate = period / divisor
            if candidate < tolerances.min_period:
                continue
            if _closure(sys, state, candidate, tolerances.shooting_tol) <= tolerances.closure_tol:
                period, reduced = candidate, True
                break
    logger.info(
        f"No divisor up to {cap} of T={period:.10f} closes the orbit; "
        f"multiples by larger primes are not detected"
    )
    return period


def minimal_period(
    sys: MechanicalSystem, orbit: PeriodicOrbit, tolerances: Optional[Tolerances] = None
) -> float:
    """Divides the converged period by n ≤ max_period_divisor for as long as the orbit still closes."""
    return _minimal_period(sys, orbit.theta0.as_array(), orbit.converged_period, resolve(tolerances))


def build_orbit(
    sys: MechanicalSystem,
    k: float,
    state: np.ndarray,
    T_min: float,
    converged_period: Optional[float] = None,
    m_max: int = DEFAULT_M_MAX,
    tolerances: Optional[Tolerances] = None,
    breakpoints: Sequence[float] = (),
) -> PeriodicOrbit:
    """Monodromy, frame, dP, verdicts and stability for a closed orbit."""
    tolerances = resolve(tolerances)
    state = np.concatenate([wrap_angle(state[:2]), state[2:]])
    end, monodromy = flow_differential(
        sys, state, T_min, tolerances.shooting_tol, breakpoints
    )
    frame = symplectic_frame(sys, state, tolerances)
    expanded = frame_expansion(frame.matrix, monodromy)
    dP = project_pi(expanded)
    residual = phase_distance(end, state)
    if residual > tolerances.closure_tol:
        logger.warning(f"Orbit closure residual {residual:.3e} above {tolerances.closure_tol:.0e}")
    if abs(np.linalg.det(dP) - 1.0) > tolerances.det_tol:
        logger.warning(f"det(dP) = {np.linalg.det(dP):.9f} deviates from 1")
    defect = sp_hat_defect(expanded)
    if defect > 1e-6 * max(1.0, float(np.max(np.abs(expanded)))):
        logger.warning(f"Monodromy departs from the Ŝp(2) block form by {defect:.3e}")
    orbit = PeriodicOrbit(
        theta0=PhasePoint.from_array(state),
        T_min=T_min,
        k=k,
        monodromy=SymplecticMatrix4(matrix=monodromy),
        frame=frame,
        dP=dP,
        stability=classify_stability(dP, tolerances.tol_stability),
        residual=residual,
        converged_period=T_min if converged_period is None else converged_period,
    )
    return orbit.model_copy(
        update={"verdicts": classify_nondegeneracy(orbit, m_max, tolerances)}
    )


def synthetic_orbit(dP: np.ndarray, T: float = 1.0, k: float = 0.0) -> PeriodicOrbit:
    """Orbit record whose monodromy is the Ŝp(2) embedding of a given dP."""
    dP = np.asarray(dP, dtype=float)
    monodromy = np.eye(4)
    monodromy[np.ix_((1, 3), (1, 3))] = dP
    base = PhasePoint.from_values(0.0, 0.0, 1.0, 0.0)
    orbit = PeriodicOrbit(
        theta0=base,
        T_min=T,
        k=k,
        monodromy=SymplecticMatrix4(matrix=monodromy),
        frame=SymplecticFrame.canonical(base),
        dP=dP,
        stability=classify_stability(dP),
        residual=0.0,
        converged_period=T,
    )
    return orbit.model_copy(update={"verdicts": classify_nondegeneracy(orbit)})


def _shooting_residual(sys, k, state, T, tol):
    end = integrate_flow(sys, state, T, tol=tol).states[-1]
    return np.concatenate([phase_difference(end, state), [sys.hamiltonian_value(state) - k]])


def find_periodic_orbit(
    sys: MechanicalSystem,
    k: float,
    guess_theta: StateLike,
    guess_T: float,
    m_max: int = DEFAULT_M_MAX,
    tolerances: Optional[Tolerances] = None,
) -> PeriodicOrbit:
    """Newton shooting for ψ_T(θ) = θ on H = k.

    Each step solves the square bordered system with the closure and energy
    rows, a phase gauge orthogonal to X^H at the current iterate and an
    unfolding column along ∇H. It is solved in the least-squares sense so
    orbit families (degenerate orbits) still converge.
    """
    tolerances = resolve(tolerances)
    if not guess_T > 0:
        raise DegenerateGuessError(f"Guess period must be positive, got {guess_T}")
    state = as_state(guess_theta).copy()
    T = float(guess_T)
    tol = tolerances.shooting_tol
    if np.linalg.norm(hamiltonian_field(sys, state)) == 0:
        raise DegenerateGuessError(f"Guess {state} is an equilibrium")

    norm = np.inf
    converged = False
    for iteration in range(tolerances.newton_max_iter):
        end, monodromy = flow_differential(sys, state, T, tol)
        residual = np.concatenate(
            [phase_difference(end, state), [sys.hamiltonian_value(state) - k]]
        )
        norm = float(np.linalg.norm(residual))
        logger.debug(f"Newton iteration {iteration}: T={T:.12f}, residual={norm:.3e}")
        if norm <= tolerances.residual_tol:
            converged = True
            break
        phase_row = hamiltonian_field(sys, state)
        phase_norm = np.linalg.norm(phase_row)
        if phase_norm == 0:
            raise DegenerateGuessError(f"Newton shooting reached the equilibrium {state}")
        gradient = normal_field(sys, state)
        # The unfolding multiplier along ∇H vanishes at a solution and is discarded.
        jacobian = np.zeros((6, 6))
        jacobian[:4, :4] = monodromy - np.eye(4)
        jacobian[:4, 4] = sys.field(end)
        jacobian[:4, 5] = gradient
        jacobian[4, :4] = gradient
        jacobian[5, :4] = phase_row / phase_norm
        step = np.linalg.lstsq(jacobian, -np.concatenate([residual, [0.0]]), rcond=None)[0]

        scale = 1.0
        accepted = False
        for _ in range(6):
            trial_T = T + scale * step[4]
            if trial_T < tolerances.min_period:
                raise DegenerateGuessError(
                    f"Newton shooting collapsed to period {trial_T:.3e}"
                )
            trial_state = state + scale * step[:4]
            trial_norm = float(np.linalg.norm(_shooting_residual(sys, k, trial_state, trial_T, tol)))
            if trial_norm < norm:
                state, T, accepted = trial_state, trial_T, True
                break
            scale *= 0.5
        if not accepted:
            break

    if not converged:
        if norm <= tolerances.closure_tol:
            logger.warning(
                f"Newton shooting stalled at residual {norm:.3e}; accepted below {tolerances.closure_tol:.0e}"
            )
        else:
            raise NoOrbitError(
                f"Newton shooting did not converge (residual {norm:.3e})", residual=norm
            )

    T_min = _minimal_period(sys, state, T, tolerances)
    logger.info(f"Periodic orbit on k={k}: T_min={T_min:.10f} (converged at T={T:.10f})")
    return build_orbit(sys, k, state, T_min, converged_period=T, m_max=m_max, tolerances=tolerances)


def orbit_distance(
    sys: MechanicalSystem,
    a: PeriodicOrbit,
    b: PeriodicOrbit,
    samples: int = 8,
    tolerances: Optional[Tolerances] = None,
) -> float:
    """Symmetric Hausdorff-type distance between two orbit curves in T*T²."""
    tolerances = resolve(tolerances)
    paths = {}
    for key, orbit in (("a", a), ("b", b)):
        paths[key] = integrate_flow(sys, orbit.theta0, orbit.T_min, tol=tolerances.shooting_tol)

    def one_sided(source, target, target_period):
        times = np.linspace(0.0, target_period, 65)
        target_points = np.array([target.state_at(t) for t in times])
        worst = 0.0
        for t in np.linspace(0.0, source.duration, samples, endpoint=False):
            point = source.state_at(t)
            gaps = [phase_distance(point, q) for q in target_points]
            best = int(np.argmin(gaps))
            lower = times[max(best - 1, 0)]
            upper = times[min(best + 1, len(times) - 1)]
            refined = minimize_scalar(
                lambda s: phase_distance(point, target.state_at(s)),
                bounds=(lower, upper),
                method="bounded",
                options={"xatol": 1e-12},
            )
            worst = max(worst, min(float(refined.fun), gaps[best]))
        return worst

    return max(
        one_sided(paths["a"], paths["b"], b.T_min), one_sided(paths["b"], paths["a"], a.T_min)
    )


def level_seeds(sys: MechanicalSystem, k: float, grid_density: int) -> List[np.ndarray]:
    """Points of H = k on an x-grid with 4n momentum directions per point."""
    grid = np.linspace(0.0, TWO_PI, grid_density, endpoint=False)
    angles = np.linspace(0.0, TWO_PI, 4 * grid_density, endpoint=False)
    seeds = []
    for x1 in grid:
        for x2 in grid:
            x = np.array([x1, x2])
            budget = k - sys.potential(x)
            if budget <= 0:
                continue
            metric = sys.metric_inverse.matrix(x)
            for angle in angles:
                direction = np.array([np.cos(angle), np.sin(angle)])
                radius = np.sqrt(2.0 * budget / float(direction @ metric @ direction))
                seeds.append(np.concatenate([x, radius * direction]))
    return seeds


def _solve_seed(task) -> List[PeriodicOrbit]:
    sys, k, seed, T_max, m_max, tolerances = task
    trajectory = integrate_flow(sys, seed, 1.05 * T_max, tol=tolerances.step_tol)
    times = np.linspace(10 * tolerances.min_period, 1.05 * T_max, max(200, int(60 * T_max)))
    gaps = np.array([phase_distance(trajectory.state_at(t), seed) for t in times])
    minima = [
        i
        for i in range(1, len(times) - 1)
        if gaps[i] <= gaps[i - 1] and gaps[i] <= gaps[i + 1] and gaps[i] < 0.5
    ]
    for index in minima[:1]:
        try:
            orbit = find_periodic_orbit(sys, k, seed, times[index], m_max, tolerances)
        except NoOrbitError as e:
            logger.debug(f"Seed {seed} rejected: {str(e)}")
            continue
        if orbit.T_min <= T_max * (1 + 1e-9):
            return [orbit]
    return []


def scan_short_orbits(
    sys: MechanicalSystem,
    k: float,
    T_max: float,
    grid_density: int = 1,
    m_max: int = DEFAULT_M_MAX,
    jobs: int = 1,
    tolerances: Optional[Tolerances] = None,
) -> OrbitScan:
    """Grid-seeded Newton search for distinct orbits with T_min ≤ T_max."""
    tolerances = resolve(tolerances)
    seeds = level_seeds(sys, k, grid_density)
    tasks = [(sys, k, seed, T_max, m_max, tolerances) for seed in seeds]
    logger.info(f"Scanning {len(seeds)} seeds on k={k} up to T={T_max} with {jobs} job(s)")
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_seed, tasks))
    else:
        results = [_solve_seed(task) for task in tasks]

    candidates = sorted(
        (orbit for found in results for orbit in found),
        key=lambda o: (round(o.T_min, 8), tuple(np.round(o.theta0.as_array(), 6))),
    )
    distinct: List[PeriodicOrbit] = []
    for orbit in candidates:
        duplicate = any(
            abs(orbit.T_min - kept.T_min) <= 1e-6 * max(1.0, kept.T_min)
            and orbit_distance(sys, orbit, kept, tolerances=tolerances) <= tolerances.dedup_radius
            for kept in distinct
        )
        if not duplicate:
            distinct.append(orbit)
    min_period = min((o.T_min for o in distinct), default=None)
    logger.info(f"Found {len(distinct)} distinct orbit(s); empirical minimal period {min_period}")
    return OrbitScan(k=k, T_max=T_max, orbits=distinct, min_period=min_period, seeds_tried=len(seeds))


def _critical_points(sys: MechanicalSystem, grid_density: int) -> List[np.ndarray]:
    grid = np.linspace(0.0, TWO_PI, grid_density, endpoint=False)
    found = []
    for x1 in grid:
        for x2 in grid:
            solution = root(
                lambda x: sys.potential_jet(x).grad,
                np.array([x1, x2]),
                jac=lambda x: sys.potential_jet(x).hess,
                method="lm",
            )
            if solution.success and np.linalg.norm(sys.potential_jet(solution.x).grad) <= 1e-10:
                found.append(wrap_angle(solution.x))
    return found


def regular_level_check(
    sys: MechanicalSystem,
    k: float,
    grid_density: int = 16,
    tolerances: Optional[Tolerances] = None,
) -> LevelCheck:
    """Minimum of ‖∇H‖ over H = k, sampled by bisection along momentum rays."""
    tolerances = resolve(tolerances)
    grid = np.linspace(0.0, TWO_PI, grid_density, endpoint=False)
    directions = [np.array([np.cos(a), np.sin(a)]) for a in np.linspace(0, TWO_PI, 8, endpoint=False)]
    min_norm = np.inf
    level_points = 0
    for x1 in grid:
        for x2 in grid:
            x = np.array([x1, x2])
            if sys.potential(x) > k:
                continue
            for direction in directions:

                def excess(r, d=direction):
                    return sys.hamiltonian_value(np.concatenate([x, r * d])) - k

                if excess(0.0) >= 0.0:
                    radius = 0.0
                else:
                    upper = 1.0
                    while excess(upper) < 0.0:
                        upper *= 2.0
                    radius = brentq(excess, 0.0, upper, xtol=1e-14)
                point = np.concatenate([x, radius * direction])
                min_norm = min(min_norm, float(np.linalg.norm(sys.field(point))))
                level_points += 1

    critical_values = sorted(
        {round(sys.potential(x), 9) for x in _critical_points(sys, min(grid_density, 8))}
    )
    on_level = [c for c in critical_values if abs(c - k) <= tolerances.tol_reg]
    if on_level:
        min_norm = 0.0
    if level_points == 0 and not on_level:
        min_norm = np.inf
    is_regular = bool(min_norm > tolerances.tol_reg)
    suggested = None
    if not is_regular:
        gaps = [abs(c - k) for c in critical_values if abs(c - k) > tolerances.tol_reg]
        suggested = 0.5 * min(min(gaps, default=1.0), 1.0)
    logger.info(
        f"Level k={k}: {level_points} sampled points, min ‖∇H‖={min_norm:.3e}, regular={is_regular}"
    )
    return LevelCheck(
        k=k,
        is_regular=is_regular,
        min_gradient_norm=float(min_norm),
        suggested_delta=suggested,
        critical_values=critical_values,
        level_points=level_points,
    )


def vertical_determinant(vectors: np.ndarray) -> float:
    """det of the configuration block of a 4×2 frame; zero iff it meets the vertical."""
    return float(np.linalg.det(np.asarray(vectors)[:2, :2]))


def twist_times(
    sys: MechanicalSystem,
    theta: StateLike,
    F: Sequence[Sequence[float]],
    T: float,
    resolution: Optional[int] = None,
    tolerances: Optional[Tolerances] = None,
) -> TwistResult:
    """Isolated times t ∈ [0, T] where dψ_t(F) meets the vertical subspace."""
    tolerances = resolve(tolerances)
    frame = np.asarray(F, dtype=float)
    if frame.shape == (2, 4):
        frame = frame.T
    if frame.shape != (4, 2) or np.linalg.matrix_rank(frame) < 2:
        raise InvalidInputError("F must consist of two independent 4-vectors")
    solution = variational_solution(sys, theta, T, tolerances.shooting_tol)

    def g(t):
        return vertical_determinant(solution.flow_matrix(t) @ frame)

    count = resolution or max(400, int(50 * abs(T)))
    times = np.linspace(0.0, T, count + 1)
    values = np.array([g(t) for t in times])
    scale = float(np.max(np.abs(values)))
    if scale == 0.0:
        logger.warning(f"Twist determinant vanishes identically on [0, {T}]")
        return TwistResult(non_discrete_intervals=[(0.0, float(T))])
    zero_tol = tolerances.twist_root_tol * scale
    small = np.abs(values) <= zero_tol

    intervals = []
    start = None
    for i, flag in enumerate(np.append(small, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start >= 3:
                intervals.append((float(times[start]), float(times[i - 1])))
            start = None
    for lower, upper in intervals:
        logger.warning(f"Non-discrete twist interval [{lower:.6g}, {upper:.6g}]")

    roots = [float(t) for t, flag in zip(times, small) if flag]
    for i in range(len(times) - 1):
        a, b = values[i], values[i + 1]
        if not small[i] and not small[i + 1] and a * b < 0:
            roots.append(brentq(g, times[i], times[i + 1], xtol=1e-13))
    magnitude = np.abs(values)
    for i in range(1, len(times) - 1):
        if small[i] or not (magnitude[i] < magnitude[i - 1] and magnitude[i] < magnitude[i + 1]):
            continue
        if values[i - 1] * values[i + 1] < 0:
            continue
        refined = minimize_scalar(
            lambda t: abs(g(t)),
            bounds=(times[i - 1], times[i + 1]),
            method="bounded",
            options={"xatol": 1e-13},
        )
        if refined.fun <= zero_tol:
            roots.append(float(refined.x))

    roots = sorted(
        t for t in roots if not any(lower <= t <= upper for lower, upper in intervals)
    )
    isolated: List[float] = []
    for t in roots:
        if not isolated or t - isolated[-1] > 1e-8 * max(1.0, abs(T)):
            isolated.append(t)
    return TwistResult(times=isolated, non_discrete_intervals=intervals)
