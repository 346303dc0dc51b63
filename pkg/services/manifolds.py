"""Stable and unstable manifolds of hyperbolic orbits on a Poincaré section.

Branches are grown as polylines of section points: seeds on the eigenline
of the section Jacobian are pushed through the return map (backward for the
stable side) and refined adaptively in the fundamental-domain parameter.
Intersections of W^u(γ₂) with W^s(γ₁) are located on cubic splines through
the polylines. ``split_manifolds`` tilts the separatrix graph of the
pendulum-rotor family inside a strip and adds the graph potential that makes
the tilted graph invariant.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from models.manifold import (
    Crossing,
    FundamentalDomain,
    HeteroclinicRecord,
    HyperbolicSplitting,
    LagrangianGraph,
    ManifoldBranch,
    Section,
    Side,
    SplitResult,
    TiltSpec,
)
from models.orbit import PeriodicOrbit
from models.system import MechanicalSystem
from models.terms import PerturbationTerm, Support, SupportKind
from models.tolerances import Tolerances, resolve
from services.flow_engine import (
    flow_differential,
    hamiltonian_field,
    integrate_flow,
    integrate_until,
)
from services.perturb import MollifiedDelta, PlateauCutoff
from services.systems import add_potential
from utils.errors import (
    BlendError,
    BranchTooShortError,
    InvalidInputError,
    ManifoldError,
    NotHyperbolicError,
    SectionError,
    SupportOverlapError,
)
from utils.fitting import linear_fit
from utils.jets import Jet
from utils.torus import TWO_PI, angle_difference, phase_distance

logger = logging.getLogger(__name__)

SEEDS_PER_DOMAIN = 24
MAX_POINTS = 2000
MAX_SEGMENT = 0.05
SEED_DISTANCE = 1e-4

_RAMP = MollifiedDelta(center=0.5, width=0.5)


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _unit(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    vector = vector / np.linalg.norm(vector)
    leading = vector[np.abs(vector) > 1e-12]
    return -vector if leading.size and leading[0] < 0 else vector


# Sections and return maps


def section_through(sys: MechanicalSystem, orbit: PeriodicOrbit) -> Section:
    """Section through θ0 across the fastest-moving angle."""
    state = orbit.theta0.as_array()
    velocity = hamiltonian_field(sys, state)[:2]
    axis = int(np.argmax(np.abs(velocity)))
    return Section(
        axis=axis, value=float(state[axis]), direction=1 if velocity[axis] > 0 else -1
    )


def lift_to_level(sys: MechanicalSystem, section: Section, k: float, point) -> np.ndarray:
    """Phase point on Σ ∩ {H = k} with section coordinates ``point``.

    p_i solves the quadratic H = k; the root is the one whose ẋ_i has the
    section's crossing sign.
    """
    i, j = section.axis, section.other
    x = np.zeros(2)
    x[i], x[j] = section.value, point[0]
    G = sys.metric_inverse.matrix(x)
    p_j = float(point[1])
    a = 0.5 * G[i, i]
    b = G[i, j] * p_j
    c = 0.5 * G[j, j] * p_j**2 + sys.potential(x) - k
    discriminant = b * b - 4.0 * a * c
    if discriminant < 0:
        raise SectionError(f"Section point {list(point)} is outside the projection of H = {k}")
    state = np.zeros(4)
    state[:2] = x
    state[2 + i] = (-b + section.direction * np.sqrt(discriminant)) / (2.0 * a)
    state[2 + j] = p_j
    return state


class SectionReturnMap:
    """First-return map of Σ on the level H = k, in section coordinates."""

    def __init__(
        self,
        sys: MechanicalSystem,
        k: float,
        section: Section,
        tolerances: Optional[Tolerances] = None,
        max_return_time: float = 100.0,
    ):
        self.sys = sys
        self.k = k
        self.section = section
        self.tolerances = resolve(tolerances)
        self.max_return_time = max_return_time

    def lift(self, point) -> np.ndarray:
        return lift_to_level(self.sys, self.section, self.k, point)

    def crossing(self, state: np.ndarray, backward: bool = False) -> Tuple[float, np.ndarray]:
        """(time, state) of the next crossing of Σ from ``state``."""
        i = self.section.axis
        sign = -1.0 if backward else 1.0
        target = state[i] + sign * self.section.direction * TWO_PI
        hit = integrate_until(
            self.sys,
            state,
            lambda _t, y: y[i] - target,
            sign * self.max_return_time,
            tolerances=self.tolerances,
        )
        if hit is None:
            raise SectionError(
                f"No return to Σ within {self.max_return_time} from {state.tolist()}"
            )
        time, end = hit
        end = end.copy()
        end[i] = state[i]
        return abs(time), end

    def step(self, point, backward: bool = False) -> np.ndarray:
        _, end = self.crossing(self.lift(point), backward)
        return self.section.coordinates(end)

    def forward(self, point, iterates: int = 1) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        for _ in range(iterates):
            point = self.step(point)
        return point

    def backward(self, point, iterates: int = 1) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        for _ in range(iterates):
            point = self.step(point, backward=True)
        return point

    def return_time(self, point) -> float:
        return self.crossing(self.lift(point))[0]

    def jacobian(self, point, T: Optional[float] = None) -> np.ndarray:
        """dP in section coordinates from the flow differential.

        dP = Π·(I − X e_iᵀ / X_i)·dψ_T·dL, with dL the differential of the
        energy lift and Π the projection onto (x_j, p_j).
        """
        state = self.lift(point)
        if T is None:
            T = self.return_time(point)
        end, flow = flow_differential(self.sys, state, T, self.tolerances.step_tol)
        i, j = self.section.axis, self.section.other
        gradient = self.sys.hamiltonian_jet(state).gradient()
        lift = np.zeros((4, 2))
        lift[j, 0] = 1.0
        lift[2 + i, 0] = -gradient[j] / gradient[2 + i]
        lift[2 + j, 1] = 1.0
        lift[2 + i, 1] = -gradient[2 + j] / gradient[2 + i]
        field = hamiltonian_field(self.sys, end)
        projector = np.eye(4) - np.outer(field, np.eye(4)[i]) / field[i]
        full = projector @ flow @ lift
        return full[[j, 2 + j], :]

    def finite_difference_jacobian(self, point, step: float = 1e-6) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        columns = []
        for index in range(2):
            offset = np.zeros(2)
            offset[index] = step
            columns.append((self.forward(point + offset) - self.forward(point - offset)) / (2 * step))
        return np.column_stack(columns)


class LinearReturnMap:
    """ξ ↦ ξ* + M(ξ − ξ*), a model return map with constant Jacobian."""

    def __init__(self, matrix, fixed_point=(0.0, 0.0)):
        self.matrix = np.asarray(matrix, dtype=float)
        self.fixed_point = np.asarray(fixed_point, dtype=float)
        self._inverse = np.linalg.inv(self.matrix)

    def forward(self, point, iterates: int = 1) -> np.ndarray:
        offset = np.asarray(point, dtype=float) - self.fixed_point
        return self.fixed_point + np.linalg.matrix_power(self.matrix, iterates) @ offset

    def backward(self, point, iterates: int = 1) -> np.ndarray:
        offset = np.asarray(point, dtype=float) - self.fixed_point
        return self.fixed_point + np.linalg.matrix_power(self._inverse, iterates) @ offset

    def jacobian(self, point=None, T: Optional[float] = None) -> np.ndarray:
        return self.matrix


ReturnMap = Union[SectionReturnMap, LinearReturnMap]


def hyperbolic_splitting(
    source: Union[PeriodicOrbit, np.ndarray], tolerances: Optional[Tolerances] = None
) -> HyperbolicSplitting:
    """Real eigenpairs (λ_u, v_u, λ_s, v_s) of a 2×2 Poincaré derivative."""
    tolerances = resolve(tolerances)
    matrix = source.dP if isinstance(source, PeriodicOrbit) else np.asarray(source, dtype=float)
    values, vectors = np.linalg.eig(matrix)
    if np.any(np.abs(values.imag) > tolerances.tol_stability) or np.any(
        np.abs(np.abs(values) - 1.0) <= tolerances.tol_stability
    ):
        raise NotHyperbolicError(f"Multipliers {values.tolist()} touch the unit circle")
    order = np.argsort(-np.abs(values.real))
    lambda_u, lambda_s = (float(values.real[index]) for index in order)
    splitting = HyperbolicSplitting(
        lambda_u=lambda_u,
        v_u=_unit(vectors[:, order[0]].real),
        lambda_s=lambda_s,
        v_s=_unit(vectors[:, order[1]].real),
    )
    if abs(splitting.product - 1.0) > 1e-6:
        logger.warning(f"λ_u·λ_s = {splitting.product:.10f} is not 1 within 1e-6")
    return splitting


# Branch growth


def _seed_distance(advance, fixed_point, direction, tol, start) -> float:
    """Halve δ until the image of ξ* + δv stays within ``tol`` of the eigenline."""
    delta = start
    for _ in range(40):
        image = advance(fixed_point + delta * direction) - fixed_point
        if abs(_cross(direction, image)) <= tol:
            return delta
        delta *= 0.5
    logger.warning(f"Seed deviation still above {tol:.1e} at δ={delta:.3e}")
    return delta


def _turning_angles(path: np.ndarray) -> np.ndarray:
    """Angle between consecutive segments at every interior vertex."""
    segments = np.diff(path, axis=0)
    a, b = segments[:-1], segments[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    return np.abs(np.arctan2(cross, dot))


def grow_branch(
    return_map: ReturnMap,
    fixed_point,
    jacobian: np.ndarray,
    side: Side,
    radius: float,
    sign: int = 1,
    section: Optional[Section] = None,
    k: float = 0.0,
    seeds: int = SEEDS_PER_DOMAIN,
    max_points: int = MAX_POINTS,
    max_segment: float = MAX_SEGMENT,
    seed_distance: float = SEED_DISTANCE,
    tolerances: Optional[Tolerances] = None,
) -> ManifoldBranch:
    """Branch of W^u or W^s of a hyperbolic fixed point up to arclength ``radius``.

    Point u = n + σ is the n-th image of the seed ξ* + sign·δ·Λ^σ·v, where Λ
    is the expansion per iterate (|λ_u| forward or 1/|λ_s| backward). A
    negative multiplier flips sides, so one iterate is then two returns.
    """
    tolerances = resolve(tolerances)
    if not radius > 0:
        raise InvalidInputError(f"Branch radius must be positive, got {radius}")
    side = Side(side)
    fixed_point = np.asarray(fixed_point, dtype=float)
    splitting = hyperbolic_splitting(jacobian, tolerances)
    if side == Side.UNSTABLE:
        eigenvalue, vector, step = splitting.lambda_u, splitting.v_u, return_map.forward
    else:
        eigenvalue, vector, step = splitting.lambda_s, splitting.v_s, return_map.backward
    steps = 2 if eigenvalue < 0 else 1
    growth = abs(eigenvalue) ** steps
    if side == Side.STABLE:
        growth = 1.0 / growth
    direction = sign * vector

    def advance(point):
        for _ in range(steps):
            point = step(point)
        return point

    delta = _seed_distance(advance, fixed_point, direction, tolerances.manifold_tol, seed_distance)
    cache: Dict[float, np.ndarray] = {}

    def point_at(u: float) -> np.ndarray:
        key = round(u, 12)
        if key not in cache:
            n = int(np.floor(key))
            if n == 0:
                cache[key] = fixed_point + delta * growth**key * direction
            else:
                cache[key] = advance(point_at(key - 1.0))
        return cache[key]

    parameters: List[float] = []
    points: List[np.ndarray] = []
    truncated = False
    length, previous, n = 0.0, fixed_point, 0
    while length < radius and not truncated:
        for j in range(seeds):
            u = n + j / seeds
            try:
                point = point_at(u)
            except SectionError as e:
                logger.warning(f"Branch truncated at u={u:.4f}: {str(e)}")
                truncated = True
                break
            length += float(np.linalg.norm(point - previous))
            previous = point
            parameters.append(u)
            points.append(point)
            if length >= radius:
                break
        n += 1
        if n > 60:
            logger.warning(f"Branch stopped after {n} domains at length {length:.4f}")
            truncated = True
        if len(points) >= max_points:
            truncated = True

    parameters, points, refined_truncated = _refine(
        point_at, parameters, points, fixed_point, max_segment, tolerances.max_curve_angle, max_points
    )
    truncated = truncated or refined_truncated
    if truncated:
        logger.warning(f"{side.value} branch truncated at {len(points)} points")
    branch = ManifoldBranch(
        side=side,
        sign=sign,
        section=section or Section(),
        k=k,
        fixed_point=fixed_point,
        eigenvalue=eigenvalue,
        direction=direction,
        seed_distance=delta,
        steps_per_iterate=steps,
        parameters=np.array(parameters),
        points=np.array(points).reshape(-1, 2),
        truncated=truncated,
    )
    logger.info(
        f"Grew {side.value} branch: {len(points)} points, length {branch.length:.4f}, δ={delta:.3e}"
    )
    return branch


def _refine(point_at, parameters, points, fixed_point, max_segment, max_angle, max_points):
    """Insert midpoints in u until segments are short and turning angles small."""
    truncated = False
    while True:
        path = np.vstack([fixed_point, np.array(points).reshape(-1, 2)])
        lengths = np.linalg.norm(np.diff(path, axis=0), axis=1)[1:]
        angles = _turning_angles(path)
        split = {
            index
            for index in range(len(points) - 1)
            if (
                lengths[index] > max_segment
                or angles[index] > max_angle
                or (index + 1 < len(angles) and angles[index + 1] > max_angle)
            )
            and parameters[index + 1] - parameters[index] > 1e-9
        }
        if not split:
            return parameters, points, truncated
        if len(points) + len(split) > max_points:
            return parameters, points, True
        new_parameters, new_points = [parameters[0]], [points[0]]
        for index in range(len(points) - 1):
            if index in split:
                u = 0.5 * (parameters[index] + parameters[index + 1])
                try:
                    point = point_at(u)
                except SectionError as e:
                    logger.warning(f"Refinement stopped at u={u:.6f}: {str(e)}")
                    return new_parameters, new_points, True
                new_parameters.append(u)
                new_points.append(point)
            new_parameters.append(parameters[index + 1])
            new_points.append(points[index + 1])
        parameters, points = new_parameters, new_points


def grow_local_manifold(
    sys: MechanicalSystem,
    orbit: PeriodicOrbit,
    side: Union[Side, str],
    radius: float,
    tol: Optional[float] = None,
    sign: int = 1,
    tolerances: Optional[Tolerances] = None,
    **growth,
) -> ManifoldBranch:
    """W^u_a or W^s_a of ``orbit`` traced on the section through θ0."""
    tolerances = resolve(tolerances)
    if tol is not None:
        tolerances = tolerances.with_overrides({"manifold_tol": tol})
    section = section_through(sys, orbit)
    return_map = SectionReturnMap(sys, orbit.k, section, tolerances)
    fixed_point = section.coordinates(orbit.theta0.as_array())
    T, end = return_map.crossing(return_map.lift(fixed_point))
    gap = float(np.linalg.norm(section.coordinates(end) - fixed_point))
    if gap > 1e-6:
        raise SectionError(f"θ0 is not a fixed point of the return map (gap {gap:.3e})")
    jacobian = return_map.jacobian(fixed_point, T)
    branch = grow_branch(
        return_map,
        fixed_point,
        jacobian,
        Side(side),
        radius,
        sign=sign,
        section=section,
        k=orbit.k,
        tolerances=tolerances,
        **growth,
    )
    flow_time = float(branch.parameters[-1]) * branch.steps_per_iterate * T if len(branch.points) else 0.0
    return branch.model_copy(update={"flow_time": flow_time})


def fundamental_domain(branch: ManifoldBranch, start: Optional[float] = None) -> FundamentalDomain:
    """Branch segment between point(u0) and its image point(u0 + 1)."""
    if len(branch.points) < 2:
        raise BranchTooShortError(f"Branch has {len(branch.points)} point(s)")
    parameters = branch.parameters
    u0 = float(parameters[0]) if start is None else float(start)
    if not (np.any(np.isclose(parameters, u0)) and np.any(np.isclose(parameters, u0 + 1.0))):
        raise BranchTooShortError(
            f"Branch covers u in [{parameters[0]:.4f}, {parameters[-1]:.4f}], "
            f"needs [{u0:.4f}, {u0 + 1:.4f}]"
        )
    mask = (parameters >= u0 - 1e-12) & (parameters <= u0 + 1.0 + 1e-12)
    return FundamentalDomain(
        start_parameter=u0, points=branch.points[mask], parameters=parameters[mask]
    )


# Curves and intersections


class _Curve:
    """Cubic spline through a polyline, parametrized by cumulative chord length."""

    def __init__(self, path: np.ndarray):
        steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        keep = np.concatenate([[True], steps > 1e-14])
        self.points = path[keep]
        self.s = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(self.points, axis=0), axis=1))]
        )
        self.spline = CubicSpline(self.s, self.points, axis=0)
        self.tree = cKDTree(self.points)

    def __call__(self, s: float, nu: int = 0) -> np.ndarray:
        return self.spline(s, nu)

    def interior(self, s: float) -> bool:
        return self.s[0] + 1e-9 < s < self.s[-1] - 1e-9

    def foot(self, point: np.ndarray) -> float:
        """Parameter of the closest curve point (nearest node, then Newton)."""
        _, index = self.tree.query(point)
        b = float(self.s[index])
        for _ in range(10):
            offset = self(b) - point
            d1, d2 = self(b, 1), self(b, 2)
            curvature = float(d1 @ d1 + offset @ d2)
            if curvature <= 0:
                break
            step = float(offset @ d1) / curvature
            b = float(np.clip(b - step, self.s[0], self.s[-1]))
            if abs(step) < 1e-14:
                break
        return b

    def signed_distance(self, point: np.ndarray) -> Tuple[float, float]:
        b = self.foot(point)
        tangent = self(b, 1)
        return _cross(tangent, point - self(b)) / float(np.linalg.norm(tangent)), b


def _path(branch: ManifoldBranch) -> np.ndarray:
    return np.vstack([branch.fixed_point, branch.points])


def branch_distance(branch: ManifoldBranch, point) -> float:
    """Distance from ``point`` to the spline through the branch."""
    distance, _ = _Curve(_path(branch)).signed_distance(np.asarray(point, dtype=float))
    return abs(distance)


def branch_invariance_defect(
    return_map: ReturnMap, branch: ManifoldBranch, count: int = 10
) -> float:
    """Largest distance from the curve of contracted images of branch points.

    Unstable points are pulled back, stable points pushed forward, so images
    stay inside the grown part of the branch.
    """
    candidates = np.flatnonzero(branch.parameters >= 1.0)
    if candidates.size == 0:
        raise BranchTooShortError("Branch has no point beyond its seed domain")
    picks = candidates[np.linspace(0, candidates.size - 1, min(count, candidates.size)).astype(int)]
    curve = _Curve(_path(branch))
    worst = 0.0
    for index in picks:
        point = branch.points[index]
        if branch.side == Side.UNSTABLE:
            image = return_map.backward(point, branch.steps_per_iterate)
        else:
            image = return_map.forward(point, branch.steps_per_iterate)
        distance, _ = curve.signed_distance(image)
        worst = max(worst, abs(distance))
    return worst


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    runs, start = [], None
    for index, flag in enumerate(mask):
        if flag and start is None:
            start = index
        elif not flag and start is not None:
            runs.append((start, index - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _record(unstable, stable, a, b, shift, tolerances, coincident=False) -> HeteroclinicRecord:
    t_u = _unit(unstable(a, 1))
    t_s = _unit(stable(b, 1))
    angle = float(np.arctan2(abs(_cross(t_u, t_s)), abs(float(t_u @ t_s))))
    transversal = angle > tolerances.tol_angle and not coincident
    return HeteroclinicRecord(
        point=np.asarray(unstable(a), dtype=float),
        tangent_u=t_u,
        tangent_s=t_s,
        angle=angle,
        classification=Crossing.TRANSVERSAL if transversal else Crossing.TANGENTIAL,
        arclength_u=float(a),
        arclength_s=float(b),
        shift=shift,
    )


def _newton_intersection(unstable, stable, a, b) -> Tuple[float, float, float]:
    for _ in range(25):
        residual = unstable(a) - stable(b)
        jacobian = np.column_stack([unstable(a, 1), -stable(b, 1)])
        step = np.linalg.lstsq(jacobian, residual, rcond=None)[0]
        a = float(np.clip(a - step[0], unstable.s[0], unstable.s[-1]))
        b = float(np.clip(b - step[1], stable.s[0], stable.s[-1]))
        if np.linalg.norm(step) < 1e-14:
            break
    return a, b, float(np.linalg.norm(unstable(a) - stable(b)))


def _intersections(unstable, stable, shift, tolerances, reach, min_run):
    count = len(unstable.points)
    distances = np.full(count, np.nan)
    feet = np.zeros(count)
    for index, point in enumerate(unstable.points):
        distance, b = stable.signed_distance(point)
        if stable.interior(b) and abs(distance) < reach:
            distances[index], feet[index] = distance, b
    close = np.abs(np.nan_to_num(distances, nan=np.inf)) <= tolerances.coincidence_tol

    records: List[HeteroclinicRecord] = []
    in_run = np.zeros(count, dtype=bool)
    for start, stop in _runs(close):
        if unstable.s[stop] - unstable.s[start] > min_run:
            in_run[start : stop + 1] = True
            middle = (start + stop) // 2
            records.append(
                _record(unstable, stable, unstable.s[middle], feet[middle], shift, tolerances, True)
            )

    for index in range(count - 1):
        d0, d1 = distances[index], distances[index + 1]
        if not (np.isfinite(d0) and np.isfinite(d1)) or d0 * d1 >= 0:
            continue
        if in_run[index] or in_run[index + 1]:
            continue
        s0, s1 = unstable.s[index], unstable.s[index + 1]
        a = s0 + (s1 - s0) * d0 / (d0 - d1)
        b = stable.foot(unstable(a))
        a, b, residual = _newton_intersection(unstable, stable, a, b)
        if residual > tolerances.manifold_tol:
            logger.debug(f"Crossing near s={a:.6f} did not refine (residual {residual:.2e})")
            continue
        point = unstable(a)
        if any(r.shift == shift and np.linalg.norm(r.point - point) < 1e-6 for r in records):
            continue
        records.append(_record(unstable, stable, a, b, shift, tolerances))
    return records


def find_heteroclinic(
    branch_u: ManifoldBranch,
    branch_s: ManifoldBranch,
    tolerances: Optional[Tolerances] = None,
    shifts: Sequence[int] = (-1, 0, 1),
    reach: float = 0.25,
    min_run: float = 0.1,
) -> List[HeteroclinicRecord]:
    """Intersections of a W^u branch with a W^s branch on a common section.

    W^s is also tried shifted by 2π·``shifts`` in the angle coordinate.
    Coincident stretches longer than ``min_run`` give one tangential record
    each; sign changes of the signed distance are refined by Newton on the
    two splines.
    """
    tolerances = resolve(tolerances)
    if branch_u.section.axis != branch_s.section.axis or abs(branch_u.k - branch_s.k) > 1e-9:
        raise InvalidInputError("Branches lie on different sections or energy levels")
    if len(branch_u.points) < 2 or len(branch_s.points) < 2:
        return []
    unstable = _Curve(_path(branch_u))
    records: List[HeteroclinicRecord] = []
    for shift in shifts:
        stable = _Curve(_path(branch_s.shifted(TWO_PI * shift)))
        records.extend(_intersections(unstable, stable, shift, tolerances, reach, min_run))
    records.sort(key=lambda r: r.arclength_u)
    transversal = sum(r.classification == Crossing.TRANSVERSAL for r in records)
    logger.info(f"Found {len(records)} intersection(s), {transversal} transversal")
    return records


def principal_record(records: Sequence[HeteroclinicRecord]) -> Optional[HeteroclinicRecord]:
    """The intersection farthest from γ₁ along W^s."""
    return max(records, key=lambda r: r.arclength_s, default=None)


# Lagrangian graphs and graph potentials


def pendulum_parameters(sys: MechanicalSystem, density: int = 16) -> Tuple[float, float]:
    """(μ, c) with H = ½|p|² − μ cos x1 + c, else ``ManifoldError``."""
    grid = np.linspace(0.0, TWO_PI, density, endpoint=False)
    points = [np.array([a, b]) for a in grid for b in grid]
    if any(not np.allclose(sys.metric_inverse.matrix(x), np.eye(2), atol=1e-12) for x in points):
        raise ManifoldError(f"System '{sys.name}' does not have the flat metric")
    mu = 0.5 * (sys.potential(np.array([np.pi, 0.0])) - sys.potential(np.zeros(2)))
    constant = sys.potential(np.array([0.5 * np.pi, 0.0]))
    worst = max(abs(sys.potential(x) - (constant - mu * np.cos(x[0]))) for x in points)
    if worst > 1e-12 or not mu > 0:
        raise ManifoldError(
            f"System '{sys.name}' is not a decoupled pendulum-rotor (mismatch {worst:.2e}, μ={mu:.3g})"
        )
    return float(mu), float(constant)


class SeparatrixGraph(LagrangianGraph):
    """Upper separatrix p1 = 2√μ·cos(x1/2), p2 = ω, plus the tilt t·∇χ.

    χ = ρ(x1)·sin(m·φ) with φ = x2 − ω·τ(x1) constant along the separatrix
    flow and ρ a smooth ramp from 0 to 1 across the strip. x1 is read in
    (−π, π], the domain of the separatrix.
    """

    mu: float
    omega: float
    tilt: TiltSpec

    def _ramp(self, x1: float) -> Tuple[float, ...]:
        start = self.tilt.center - self.tilt.ramp_half_width
        scale = 1.0 / (2.0 * self.tilt.ramp_half_width)
        v = (x1 - start) * scale
        derivatives = _RAMP.derivatives(v, 4)
        return (_RAMP.cdf(v),) + tuple(
            float(derivatives[j - 1]) * scale**j for j in range(1, 5)
        )

    def _tau(self, x1: float) -> Tuple[float, ...]:
        root = np.sqrt(self.mu)
        s, c = np.sin(0.5 * x1), np.cos(0.5 * x1)
        return (
            np.arctanh(s) / root,
            1.0 / (2.0 * root * c),
            s / (4.0 * root * c**2),
            (1.0 + s**2) / (8.0 * root * c**3),
            s * (5.0 + s**2) / (16.0 * root * c**4),
        )

    def momentum_jets(self, x: np.ndarray) -> Tuple[Jet, Jet]:
        x1 = float(angle_difference(x[0], 0.0))
        x1_jet = Jet.coordinate(0, x1)
        root = np.sqrt(self.mu)
        s, c = np.sin(0.5 * x1), np.cos(0.5 * x1)
        p1 = x1_jet.compose((2 * root * c, -root * s, -0.5 * root * c, 0.25 * root * s))
        p2 = Jet.constant(self.omega)
        rho = self._ramp(x1)
        if self.tilt.magnitude == 0.0 or not any(rho):
            return p1, p2
        tau = self._tau(x1)
        m = float(self.tilt.mode)
        ramp, ramp_slope = x1_jet.compose(rho[:4]), x1_jet.compose(rho[1:])
        tau_slope = x1_jet.compose(tau[1:])
        phase = (Jet.coordinate(1, float(x[1])) - self.omega * x1_jet.compose(tau[:4])) * m
        sin_m, cos_m = phase.sin(), phase.cos()
        chi_1 = ramp_slope * sin_m - (m * self.omega) * (tau_slope * ramp * cos_m)
        chi_2 = m * (ramp * cos_m)
        t = self.tilt.magnitude
        return p1 + t * chi_1, p2 + t * chi_2


class ConstantGraph(LagrangianGraph):
    """p(x) ≡ momentum on the domain."""

    momentum_value: Tuple[float, float]

    def momentum_jets(self, x: np.ndarray) -> Tuple[Jet, Jet]:
        return Jet.constant(self.momentum_value[0]), Jet.constant(self.momentum_value[1])


def separatrix_graph(
    sys: MechanicalSystem, k: float, tilt: Optional[TiltSpec] = None
) -> SeparatrixGraph:
    tilt = tilt or TiltSpec(magnitude=0.0)
    mu, constant = pendulum_parameters(sys)
    kinetic = k - mu - constant
    if not kinetic > 0:
        raise ManifoldError(f"Level k={k} lies below the separatrix energy {mu + constant}")
    return SeparatrixGraph(
        mu=mu,
        omega=float(np.sqrt(2.0 * kinetic)),
        tilt=tilt,
        domain=tilt.support,
        inner=Support.strip(0, tilt.center, tilt.inner),
    )


class GraphPotentialTerm(PerturbationTerm):
    """f̄ = σ·(k − H(x, p(x))), σ = 1 on V and 0 outside the strip D."""

    kind: Literal["graph-potential"] = "graph-potential"
    graph: LagrangianGraph
    k: float
    base: MechanicalSystem
    cutoff: PlateauCutoff

    @property
    def support(self) -> Support:
        return self.graph.domain

    def level_jet(self, x: np.ndarray) -> Jet:
        """Jet of x ↦ H(x, p(x))."""
        p1, p2 = self.graph.momentum_jets(x)
        g11, g12, g22 = (entry.jet(x) for entry in self.base.metric_inverse.entries())
        kinetic = 0.5 * (g11 * p1 * p1 + 2.0 * (g12 * p1 * p2) + g22 * p2 * p2)
        return kinetic + self.base.potential_jet(x)

    def raw_jet(self, x: np.ndarray) -> Jet:
        domain = self.graph.domain
        offset = float(angle_difference(x[domain.axis], domain.center[domain.axis]))
        if abs(offset) >= self.cutoff.outer:
            return Jet.zero()
        deficit = self.k - self.level_jet(x)
        if abs(offset) <= self.cutoff.inner:
            return deficit
        sigma = Jet.coordinate(domain.axis, offset).compose(self.cutoff.derivatives(offset))
        return sigma * deficit


def collar_defect(term: GraphPotentialTerm, samples: int = 24) -> float:
    """max |H(x, p(x)) − k| over the collar D ∖ V."""
    domain = term.graph.domain
    inner, outer = term.cutoff.inner, term.cutoff.outer
    across = np.linspace(inner, outer, 6)[1:-1]
    along = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    worst = 0.0
    for offset in np.concatenate([-across, across]):
        for y in along:
            x = np.zeros(2)
            x[domain.axis] = domain.center[domain.axis] + offset
            x[1 - domain.axis] = y
            worst = max(worst, abs(term.level_jet(x).value - term.k))
    return worst


def graph_potential(
    sys: MechanicalSystem,
    graph: LagrangianGraph,
    k: float,
    tolerances: Optional[Tolerances] = None,
) -> GraphPotentialTerm:
    """Potential whose addition puts the graph in the level k inside V."""
    tolerances = resolve(tolerances)
    domain, inner = graph.domain, graph.inner
    if domain.kind != SupportKind.STRIP or inner.kind != SupportKind.STRIP:
        raise ManifoldError("Graph potentials are built on strip domains")
    if not 0 < inner.half_width < domain.half_width:
        raise ManifoldError(
            f"Inner strip half-width {inner.half_width} must lie inside (0, {domain.half_width})"
        )
    term = GraphPotentialTerm(
        graph=graph,
        k=k,
        base=sys,
        cutoff=PlateauCutoff(inner=inner.half_width, outer=domain.half_width),
    )
    defect = collar_defect(term)
    if defect > tolerances.blend_tol:
        raise BlendError(
            f"Graph is {defect:.3e} off the level in the collar (limit {tolerances.blend_tol:.1e})"
        )
    logger.info(f"Graph potential on strip |x{domain.axis + 1} − {domain.center[domain.axis]:.3f}| "
                f"< {domain.half_width:.3f}, collar defect {defect:.2e}")
    return term


def graph_invariance_defect(
    sys: MechanicalSystem,
    graph: LagrangianGraph,
    points: Sequence[Sequence[float]],
    duration: float = 1.0,
    tolerances: Optional[Tolerances] = None,
) -> float:
    """Largest |p(t) − p(x(t))| after flowing graph points for ``duration``."""
    worst = 0.0
    for x in points:
        end = integrate_flow(sys, graph.lift(x), duration, tolerances=tolerances).states[-1]
        worst = max(worst, float(np.linalg.norm(end[2:] - graph.momentum(end[:2]))))
    return worst


def curl_defect(graph: LagrangianGraph, points: Sequence[Sequence[float]]) -> float:
    return max(abs(graph.curl(np.asarray(x, dtype=float))) for x in points)


# Splitting


def _check_disjoint(sys: MechanicalSystem, orbit: PeriodicOrbit, support: Support) -> None:
    trajectory = integrate_flow(sys, orbit.theta0, orbit.T_min)
    for t in np.linspace(0.0, orbit.T_min, 65):
        x = trajectory.state_at(t)[:2]
        if support.contains(x):
            raise SupportOverlapError(
                f"Perturbation support meets the orbit through {orbit.theta0.as_array().tolist()} "
                f"at x={x.tolist()}"
            )


def _closure_residual(sys: MechanicalSystem, orbit: PeriodicOrbit, tolerances: Tolerances) -> float:
    start = orbit.theta0.as_array()
    end = integrate_flow(sys, start, orbit.T_min, tol=tolerances.shooting_tol).states[-1]
    return phase_distance(end, start)


def _grow_task(task) -> ManifoldBranch:
    sys, orbit, side, radius, sign, tolerances = task
    return grow_local_manifold(sys, orbit, side, radius, sign=sign, tolerances=tolerances)


def heteroclinic_pair(
    sys: MechanicalSystem,
    orbit1: PeriodicOrbit,
    orbit2: PeriodicOrbit,
    tilt: TiltSpec,
    jobs: int = 1,
    tolerances: Optional[Tolerances] = None,
) -> Tuple[ManifoldBranch, ManifoldBranch, List[HeteroclinicRecord]]:
    """Grow W^u(γ₂) and W^s(γ₁) and intersect them."""
    tolerances = resolve(tolerances)
    tasks = [
        (sys, orbit2, Side.UNSTABLE, tilt.unstable_radius, tilt.unstable_sign, tolerances),
        (sys, orbit1, Side.STABLE, tilt.stable_radius, tilt.stable_sign, tolerances),
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            unstable, stable = pool.map(_grow_task, tasks)
    else:
        unstable, stable = (_grow_task(task) for task in tasks)
    return unstable, stable, find_heteroclinic(unstable, stable, tolerances)


def split_manifolds(
    sys: MechanicalSystem,
    orbit1: PeriodicOrbit,
    orbit2: PeriodicOrbit,
    k: float,
    tilt: Optional[TiltSpec] = None,
    jobs: int = 1,
    tolerances: Optional[Tolerances] = None,
) -> SplitResult:
    """Tilt W^u(γ₂) inside a strip and measure the new crossing with W^s(γ₁)."""
    tolerances = resolve(tolerances)
    tilt = tilt or TiltSpec()
    for orbit in (orbit1, orbit2):
        _check_disjoint(sys, orbit, tilt.support)
    graph = separatrix_graph(sys, k, tilt)
    term = graph_potential(sys, graph, k, tolerances)
    perturbed = add_potential(sys, term)
    residuals = tuple(_closure_residual(perturbed, orbit, tolerances) for orbit in (orbit1, orbit2))
    for orbit, residual in zip((orbit1, orbit2), residuals):
        if residual > tolerances.closure_tol:
            raise ManifoldError(
                f"Orbit through {orbit.theta0.as_array().tolist()} does not persist under the "
                f"graph potential (closure residual {residual:.3e})"
            )

    _, _, before = heteroclinic_pair(sys, orbit1, orbit2, tilt, jobs, tolerances)
    _, _, after = heteroclinic_pair(perturbed, orbit1, orbit2, tilt, jobs, tolerances)
    result = SplitResult(
        term=term,
        tilt=tilt,
        before=before,
        after=after,
        orbit_residuals=residuals,
        blend_defect=collar_defect(term),
    )
    logger.info(
        f"Tilt {tilt.magnitude:.1e}: angle {result.angle_before} → {result.angle_after}"
    )
    return result


def angle_versus_tilt(
    sys: MechanicalSystem,
    orbit1: PeriodicOrbit,
    orbit2: PeriodicOrbit,
    k: float,
    magnitudes: Sequence[float],
    tilt: Optional[TiltSpec] = None,
    jobs: int = 1,
    tolerances: Optional[Tolerances] = None,
) -> pd.DataFrame:
    """Crossing angle after each tilt magnitude, with a least-squares line."""
    tilt = tilt or TiltSpec()
    rows = []
    for magnitude in magnitudes:
        result = split_manifolds(
            sys, orbit1, orbit2, k, tilt.model_copy(update={"magnitude": magnitude}), jobs, tolerances
        )
        rows.append({"tilt": magnitude, "angle": result.angle_after})
    frame = pd.DataFrame(rows)
    slope, intercept, r2 = linear_fit(frame["tilt"].to_numpy(), frame["angle"].to_numpy(dtype=float))
    frame["fit"] = slope * frame["tilt"] + intercept
    frame.attrs.update({"slope": slope, "intercept": intercept, "r2": r2})
    return frame
