import numpy as np
import pytest

from models.manifold import Crossing, ManifoldBranch, Section, Side, TiltSpec
from services.manifolds import (
    LinearReturnMap,
    SectionReturnMap,
    branch_distance,
    branch_invariance_defect,
    curl_defect,
    find_heteroclinic,
    fundamental_domain,
    graph_invariance_defect,
    graph_potential,
    grow_branch,
    heteroclinic_pair,
    hyperbolic_splitting,
    pendulum_parameters,
    principal_record,
    section_through,
    separatrix_graph,
    split_manifolds,
)
from services.systems import add_potential, build_system
from utils.errors import (
    BlendError,
    BranchTooShortError,
    InvalidInputError,
    ManifoldError,
    NotHyperbolicError,
    SupportOverlapError,
)

SADDLE = np.diag([4.0, 0.25])


def _rotated(matrix, angle):
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return rotation @ matrix @ rotation.T


def _branch(fixed_point, points, side=Side.UNSTABLE, axis=1):
    points = np.asarray(points, dtype=float)
    return ManifoldBranch(
        side=side,
        sign=1,
        section=Section(axis=axis),
        k=0.0,
        fixed_point=np.asarray(fixed_point, dtype=float),
        eigenvalue=2.0,
        direction=np.array([1.0, 0.0]),
        seed_distance=0.05,
        parameters=np.arange(len(points), dtype=float),
        points=points,
    )


def _line(start, step, count):
    return [np.asarray(start) + i * np.asarray(step) for i in range(1, count + 1)]


def test_unstable_branch_of_linear_saddle():
    return_map = LinearReturnMap(SADDLE)
    branch = grow_branch(return_map, (0.0, 0.0), SADDLE, Side.UNSTABLE, radius=5.0)
    assert not branch.truncated
    assert branch.length >= 5.0
    np.testing.assert_allclose(branch.points[:, 1], 0.0, atol=1e-14)
    assert np.all(branch.points[:, 0] > 0)
    assert np.max(np.linalg.norm(np.diff(branch.points, axis=0), axis=1)) <= 0.05 + 1e-12

    domain = fundamental_domain(branch)
    np.testing.assert_allclose(domain.end, SADDLE @ domain.start, rtol=1e-12)
    assert branch_invariance_defect(return_map, branch) <= 1e-10
    assert branch_distance(branch, (1.0, 0.1)) == pytest.approx(0.1, abs=1e-9)


def test_stable_branch_follows_contracting_direction():
    return_map = LinearReturnMap(SADDLE, fixed_point=(1.0, 2.0))
    branch = grow_branch(return_map, (1.0, 2.0), SADDLE, Side.STABLE, radius=2.0, sign=-1)
    np.testing.assert_allclose(branch.points[:, 0], 1.0, atol=1e-14)
    assert np.all(branch.points[:, 1] < 2.0)
    domain = fundamental_domain(branch)
    np.testing.assert_allclose(return_map.forward(domain.end), domain.start, rtol=1e-12)


def test_rotated_saddle_branch_stays_on_eigenline():
    matrix = _rotated(SADDLE, 0.3)
    branch = grow_branch(LinearReturnMap(matrix), (0.0, 0.0), matrix, Side.UNSTABLE, radius=3.0)
    direction = np.array([np.cos(0.3), np.sin(0.3)])
    cross = branch.points[:, 0] * direction[1] - branch.points[:, 1] * direction[0]
    np.testing.assert_allclose(cross, 0.0, atol=1e-12)
    assert np.all(branch.points @ direction > 0)


def test_negative_multipliers_take_two_returns_per_iterate():
    matrix = np.diag([-4.0, -0.25])
    branch = grow_branch(LinearReturnMap(matrix), (0.0, 0.0), matrix, Side.UNSTABLE, radius=3.0)
    assert branch.steps_per_iterate == 2
    assert branch.eigenvalue == pytest.approx(-4.0)
    assert np.all(branch.points[:, 0] > 0)
    domain = fundamental_domain(branch)
    np.testing.assert_allclose(domain.end, matrix @ matrix @ domain.start, rtol=1e-12)


def test_short_branches_and_elliptic_points_are_rejected():
    branch = grow_branch(LinearReturnMap(SADDLE), (0.0, 0.0), SADDLE, Side.UNSTABLE, radius=0.01)
    with pytest.raises(BranchTooShortError):
        fundamental_domain(branch, start=50.0)
    with pytest.raises(BranchTooShortError):
        fundamental_domain(_branch((0.0, 0.0), [[0.1, 0.0]]))
    with pytest.raises(NotHyperbolicError):
        hyperbolic_splitting(np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(InvalidInputError):
        grow_branch(LinearReturnMap(SADDLE), (0.0, 0.0), SADDLE, Side.UNSTABLE, radius=0.0)


def test_hyperbolic_splitting_orders_eigenpairs():
    splitting = hyperbolic_splitting(_rotated(SADDLE, 0.3))
    assert splitting.lambda_u == pytest.approx(4.0)
    assert splitting.lambda_s == pytest.approx(0.25)
    assert splitting.product == pytest.approx(1.0)
    np.testing.assert_allclose(splitting.v_u, [np.cos(0.3), np.sin(0.3)], atol=1e-12)


def test_transversal_crossing_of_perpendicular_lines():
    unstable = _branch((0.0, 0.0), _line((0.033, 0.0), (0.05, 0.0), 40))
    stable = _branch((1.0, -1.0), _line((1.0, -1.0), (0.0, 0.05), 40), side=Side.STABLE)
    records = find_heteroclinic(unstable, stable)
    assert len(records) == 1
    record = records[0]
    np.testing.assert_allclose(record.point, [1.0, 0.0], atol=1e-10)
    assert record.angle == pytest.approx(np.pi / 2)
    assert record.classification == Crossing.TRANSVERSAL
    assert record.shift == 0
    assert record.arclength_s == pytest.approx(1.0, abs=1e-10)
    assert principal_record(records) is record
    assert principal_record([]) is None


def test_coincident_lines_give_one_tangential_record():
    unstable = _branch((0.0, 0.0), _line((0.033, 0.0), (0.05, 0.0), 40))
    stable = _branch((3.0, 0.0), _line((3.0, 0.0), (-0.05, 0.0), 40), side=Side.STABLE)
    records = find_heteroclinic(unstable, stable)
    assert len(records) == 1
    assert records[0].classification == Crossing.TANGENTIAL
    assert records[0].angle == pytest.approx(0.0, abs=1e-12)


def test_branches_on_different_sections_are_rejected():
    unstable = _branch((0.0, 0.0), _line((0.0, 0.0), (0.05, 0.0), 10))
    stable = _branch((1.0, -1.0), _line((1.0, -1.0), (0.0, 0.05), 10), side=Side.STABLE, axis=0)
    with pytest.raises(InvalidInputError):
        find_heteroclinic(unstable, stable)


def test_pendulum_parameters(s1_system, s3_system):
    mu, constant = pendulum_parameters(build_system("pendulum-rotor", mu=2.0))
    assert mu == pytest.approx(2.0)
    assert constant == pytest.approx(0.0, abs=1e-12)
    assert pendulum_parameters(s1_system) == pytest.approx((1.0, 0.0))
    with pytest.raises(ManifoldError):
        pendulum_parameters(s3_system)
    with pytest.raises(ManifoldError):
        pendulum_parameters(build_system("coupled-pendulum-rotor", coupling=0.3))
    with pytest.raises(ManifoldError):
        separatrix_graph(s1_system, 0.5)


def test_untilted_separatrix_lies_in_the_level(s1_system):
    graph = separatrix_graph(s1_system, 1.5)
    assert graph.omega == pytest.approx(1.0)
    term = graph_potential(s1_system, graph, 1.5)
    for x in ([-1.0, 0.3], [-0.4, 2.0], [-1.7, 5.0]):
        assert abs(term.value_and_gradient(x)[0]) <= 1e-12
        assert graph.momentum(x)[0] == pytest.approx(2.0 * np.cos(0.5 * x[0]))


def test_tilted_graph_is_closed_and_invariant(s1_system):
    tilt = TiltSpec(magnitude=1e-3)
    graph = separatrix_graph(s1_system, 1.5, tilt)
    points = [[x1, x2] for x1 in (-1.6, -1.2, -1.0, -0.7, -0.4) for x2 in (0.0, 1.1, 2.9, 4.4)]
    assert curl_defect(graph, points) <= 1e-10
    assert any(abs(graph.momentum(x)[1] - 1.0) > 1e-6 for x in points)

    term = graph_potential(s1_system, graph, 1.5)
    perturbed = add_potential(s1_system, term)
    starts = [[-1.0, x2] for x2 in (0.0, 1.3, 3.7)]
    assert graph_invariance_defect(perturbed, graph, starts, duration=0.1) <= 1e-6
    for x in starts:
        assert perturbed.hamiltonian_value(graph.lift(x)) == pytest.approx(1.5, abs=1e-12)


def test_large_tilt_cannot_be_blended(s1_system):
    graph = separatrix_graph(s1_system, 1.5, TiltSpec(magnitude=0.5))
    with pytest.raises(BlendError):
        graph_potential(s1_system, graph, 1.5)


def test_tilt_strip_must_avoid_the_orbits(s1_system, s1_orbit):
    with pytest.raises(SupportOverlapError):
        split_manifolds(s1_system, s1_orbit, s1_orbit, 1.5, TiltSpec(center=3.0))


def test_split_refuses_an_orbit_that_does_not_close(s1_system, s1_orbit):
    half = s1_orbit.model_copy(update={"T_min": 0.5 * s1_orbit.T_min})
    with pytest.raises(ManifoldError, match="does not persist"):
        split_manifolds(s1_system, half, s1_orbit, 1.5, TiltSpec())


def test_section_through_rotor_orbit(s1_system, s1_orbit):
    section = section_through(s1_system, s1_orbit)
    assert (section.axis, section.direction) == (1, 1)
    return_map = SectionReturnMap(s1_system, 1.5, section)
    fixed = section.coordinates(s1_orbit.theta0.as_array())
    np.testing.assert_allclose(fixed, [np.pi, 0.0], atol=1e-12)
    np.testing.assert_allclose(return_map.forward(fixed), fixed, atol=1e-8)
    assert return_map.return_time(fixed) == pytest.approx(2 * np.pi, abs=1e-8)


@pytest.mark.slow
def test_return_map_jacobian(s1_system, s1_orbit):
    section = section_through(s1_system, s1_orbit)
    return_map = SectionReturnMap(s1_system, 1.5, section)
    fixed = section.coordinates(s1_orbit.theta0.as_array())
    jacobian = return_map.jacobian(fixed)
    assert np.max(np.linalg.eigvals(jacobian).real) == pytest.approx(np.exp(2 * np.pi), rel=1e-6)
    assert np.linalg.det(jacobian) == pytest.approx(1.0, abs=1e-5)
    np.testing.assert_allclose(return_map.finite_difference_jacobian(fixed), jacobian, rtol=1e-3)


@pytest.mark.slow
def test_separatrix_branches_coincide_then_split(s1_system, s1_orbit):
    unstable, stable, before = heteroclinic_pair(s1_system, s1_orbit, s1_orbit, TiltSpec())
    assert before
    assert all(r.angle <= 1e-4 for r in before)
    separatrix = 2.0 * np.cos(0.5 * (unstable.points[:, 0] - 2 * np.pi))
    np.testing.assert_allclose(np.abs(unstable.points[:, 1]), np.abs(separatrix), atol=1e-4)

    result = split_manifolds(s1_system, s1_orbit, s1_orbit, 1.5, TiltSpec(magnitude=1e-2))
    assert max(result.orbit_residuals) <= 1e-8
    assert result.blend_defect <= 1e-3
    assert result.angle_after is not None and result.angle_after > 1e-3
    assert any(r.classification == Crossing.TRANSVERSAL for r in result.after)
