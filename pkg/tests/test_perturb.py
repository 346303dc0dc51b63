import numpy as np
import pytest

from services.flow_engine import integrate_flow
from services.perturb import (
    B_of_h,
    PlateauCutoff,
    b_complementarity,
    b_convergence,
    b_convergence_rate,
    build_abc_potential,
    build_adapted_frame,
    build_h_alpha_beta,
    build_tubular_chart,
    bump_mass,
    dS_rank,
    limit_B_formulas,
    make_delta,
    measured_poincare_derivative,
    perturb_to_nondegenerate,
    perturbed_monodromy,
    pi_of_Z,
    pi_of_Z_check,
    predicted_poincare_derivative,
    root_of_unity_score,
    sweep_coefficients,
)
from utils.errors import InvalidInputError


def test_bump_mass():
    assert bump_mass() == pytest.approx(0.443994, abs=1e-6)


@pytest.mark.parametrize(
    "order, moment, expected",
    [
        (0, lambda t: 1.0, 1.0),
        (1, lambda t: t - 2.0, -1.0),
        (2, lambda t: 0.5 * (t - 2.0) ** 2, 1.0),
    ],
)
def test_delta_moments(order, moment, expected):
    delta = make_delta(2.0, 0.05, order)
    assert delta.integrate(moment) == pytest.approx(expected, abs=1e-8)
    assert delta.support == pytest.approx((1.95, 2.05))


def test_delta_cdf_runs_from_zero_to_one():
    delta = make_delta(1.0, 0.1)
    assert delta.cdf(0.8) == 0.0
    assert delta.cdf(1.0) == pytest.approx(0.5, abs=1e-10)
    assert delta.cdf(1.2) == 1.0
    assert delta(1.5) == 0.0


def test_make_delta_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        make_delta(0.0, 0.0)
    with pytest.raises(InvalidInputError):
        make_delta(0.0, 0.1, order=3)


def test_plateau_cutoff():
    cutoff = PlateauCutoff(inner=0.1, outer=0.2)
    assert cutoff.derivatives(0.05) == (1.0, 0.0, 0.0, 0.0)
    assert cutoff.derivatives(-0.3) == (0.0, 0.0, 0.0, 0.0)
    value, slope, _, _ = cutoff.derivatives(0.15)
    assert value == pytest.approx(0.5, abs=1e-10)
    assert slope < 0
    assert cutoff.derivatives(-0.15)[1] == pytest.approx(-slope)


def test_free_particle_pi_of_Z(free_system, free_orbit):
    """Flat metric, no potential: π(𝒵) = [[−b, 2c], [−a, b]]."""
    for a, b, c in [(1.0, 1.0, 1.0), (0.3, -0.7, 2.0)]:
        np.testing.assert_allclose(
            pi_of_Z(free_system, free_orbit, 1.0, a, b, c), [[-b, 2 * c], [-a, b]], atol=1e-8
        )
    assert dS_rank(free_system, free_orbit, 1.0).rank == 3


@pytest.mark.parametrize("orbit_name, system_name", [("s1_orbit", "s1_system"), ("s3_orbit", "s3_system")])
def test_printed_formula_agrees_with_commutator(orbit_name, system_name, request):
    orbit = request.getfixturevalue(orbit_name)
    system = request.getfixturevalue(system_name)
    t1 = 0.37 * orbit.T_min
    frame = build_adapted_frame(system, orbit, t1)
    for coefficients in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.5, 0.25)]:
        check = pi_of_Z_check(system, orbit, t1, *coefficients, frame=frame)
        assert check.discrepancy <= 1e-7
        assert abs(check.trace) <= 1e-8
    rank = dS_rank(system, orbit, t1, frame=frame)
    assert rank.rank == 3
    assert np.min(rank.singular_values) > 1e-4


def test_adapted_frame_straightens_the_flow(s3_system, s3_orbit):
    frame = build_adapted_frame(s3_system, s3_orbit, 0.5 * s3_orbit.T_min)
    field = s3_system.field(frame.state)
    np.testing.assert_allclose(np.linalg.solve(frame.G, field), np.eye(4)[0], atol=1e-6)


def test_chart_half_width_is_bounded(s1_system, s1_orbit):
    with pytest.raises(InvalidInputError):
        build_tubular_chart(s1_system, s1_orbit, 1.0, 4.0)
    with pytest.raises(InvalidInputError):
        build_tubular_chart(s1_system, s1_orbit, 1.0, 0.0)


def test_chart_round_trip_on_the_base_curve(s3_system, s3_orbit):
    t0 = 0.5 * s3_orbit.T_min
    chart = build_tubular_chart(s3_system, s3_orbit, t0, 0.2)
    point = chart.inverse(t0 + 0.05, 0.01)
    s, z = chart.to_chart(point)
    assert s == pytest.approx(t0 + 0.05, abs=1e-9)
    assert z == pytest.approx(0.01, abs=1e-9)


def test_limit_vectors_are_complementary(s1_system, s1_orbit):
    t0 = 0.5 * s1_orbit.T_min
    chart = build_tubular_chart(s1_system, s1_orbit, t0, 0.1)
    vectors = limit_B_formulas(s1_system, s1_orbit, t0, 1.0, 1.0, 0.0, chart)
    report = b_complementarity(s1_system, s1_orbit, vectors)
    assert max(report.tangency) <= 1e-7
    assert report.gram_rank == 2
    assert report.non_containment_residual > 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("orbit_name, system_name", [("s1_orbit", "s1_system"), ("s3_orbit", "s3_system")])
def test_quadrature_vectors_are_tangent_to_the_level(orbit_name, system_name, request):
    orbit = request.getfixturevalue(orbit_name)
    system = request.getfixturevalue(system_name)
    t0 = 0.5 * orbit.T_min
    chart = build_tubular_chart(system, orbit, t0, 0.04)
    for alpha, beta in [(1.0, 0.0), (0.0, 1.0), (1.0, 0.5)]:
        vector = B_of_h(system, orbit, build_h_alpha_beta(chart, alpha, beta, make_delta(t0, 0.01)))
        assert np.linalg.norm(vector) > 1e-3
        assert b_complementarity(system, orbit, [vector]).tangency[0] <= 1e-7


def test_h_alpha_beta_is_flat_along_the_orbit(s3_system, s3_orbit):
    t0 = 0.5 * s3_orbit.T_min
    chart = build_tubular_chart(s3_system, s3_orbit, t0, 0.04)
    term = build_h_alpha_beta(chart, 1.0, 1.0, make_delta(t0, 0.01))
    trajectory = integrate_flow(s3_system, s3_orbit.theta0, s3_orbit.T_min, tol=1e-12)
    largest = 0.0
    for t in t0 + 0.009 * np.linspace(-1.0, 1.0, 7):
        state = trajectory.state_at(t)
        gradient = term.value_and_gradient(state[:2])[1]
        assert abs(gradient @ s3_system.field(state)[:2]) <= 1e-7
        largest = max(largest, float(np.linalg.norm(gradient)))
    assert largest > 1.0


def test_abc_potential_has_vanishing_one_jet_on_the_orbit(s1_system, s1_orbit):
    t1 = 0.5 * s1_orbit.T_min
    width = 0.01 * s1_orbit.T_min
    term = build_abc_potential(s1_system, s1_orbit, t1, 1.0, 0.5, 0.25, width=width)
    trajectory = integrate_flow(s1_system, s1_orbit.theta0, s1_orbit.T_min, tol=1e-12)
    for t in t1 + 0.9 * width * np.linspace(-1.0, 1.0, 9):
        value, gradient = term.value_and_gradient(trajectory.state_at(t)[:2])
        assert abs(value) <= 1e-12
        np.testing.assert_allclose(gradient, 0.0, atol=1e-9)
    beside = trajectory.state_at(t1)[:2] + np.array([0.01, 0.0])
    assert abs(term.value_and_gradient(beside)[0]) > 1e-6


def test_zero_abc_coefficients_leave_the_monodromy(s1_system, s1_orbit):
    t1 = 0.5 * s1_orbit.T_min
    term = build_abc_potential(s1_system, s1_orbit, t1, 0.0, 0.0, 0.0, width=0.01 * s1_orbit.T_min)
    monodromy = s1_orbit.monodromy.matrix
    np.testing.assert_allclose(
        perturbed_monodromy(s1_system, s1_orbit, term), monodromy, atol=1e-6 * np.max(np.abs(monodromy))
    )


def test_h_alpha_beta_must_fit_inside_the_chart(s1_system, s1_orbit):
    t0 = 0.5 * s1_orbit.T_min
    chart = build_tubular_chart(s1_system, s1_orbit, t0, 0.05)
    with pytest.raises(Exception, match="exceeds the chart"):
        build_h_alpha_beta(chart, 1.0, 0.0, make_delta(t0, 0.1))


def test_nondegenerate_orbit_needs_no_perturbation(s1_system, s1_orbit):
    result = perturb_to_nondegenerate(s1_system, s1_orbit, 3, 0.01)
    assert result.coefficients == (0.0, 0.0, 0.0)
    assert result.order == 6
    assert result.score == pytest.approx(root_of_unity_score(s1_orbit.dP, 6))
    assert all(v.nondegenerate for v in result.verdicts.values())


@pytest.mark.slow
def test_b_of_h_approaches_limit(s1_system, s1_orbit):
    t0 = 0.5 * s1_orbit.T_min
    widths = [0.02, 0.01, 0.005]
    frame = b_convergence(s1_system, s1_orbit, t0, widths)
    assert list(frame["width"]) == widths
    rate = b_convergence_rate(frame)
    assert rate is not None
    assert rate >= 0.8

    chart = build_tubular_chart(s1_system, s1_orbit, t0, 0.04)
    measured = B_of_h(s1_system, s1_orbit, build_h_alpha_beta(chart, 1.0, 0.0, make_delta(t0, 0.005)))
    inverted = B_of_h(
        s1_system,
        s1_orbit,
        build_h_alpha_beta(chart, 1.0, 0.0, make_delta(t0, 0.005)),
        co_integrate=False,
    )
    np.testing.assert_allclose(measured, inverted, atol=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("orbit_name, system_name", [("s1_orbit", "s1_system"), ("s3_orbit", "s3_system")])
def test_measured_derivative_matches_prediction(orbit_name, system_name, request):
    orbit = request.getfixturevalue(orbit_name)
    system = request.getfixturevalue(system_name)
    t1 = 0.5 * orbit.T_min
    width = 0.01 * orbit.T_min
    coefficients = (1.0, 0.5, 0.25)
    term = build_abc_potential(system, orbit, t1, *coefficients, width=width)
    predicted = predicted_poincare_derivative(system, orbit, t1, *coefficients)
    measured = measured_poincare_derivative(system, orbit, term)
    relative = np.linalg.norm(measured - predicted) / np.linalg.norm(predicted)
    assert relative <= max(1e-4, width)


@pytest.mark.slow
def test_sweep_moves_multipliers(s1_system, s1_orbit):
    t1 = 0.5 * s1_orbit.T_min
    frame = sweep_coefficients(s1_system, s1_orbit, t1, (1.0, 0.0, 0.0), [0.0, 0.05])
    assert list(frame.columns[:4]) == ["amplitude", "a", "b", "c"]
    assert frame["trace"].iloc[0] == pytest.approx(np.trace(s1_orbit.dP), rel=1e-8)
    assert frame["trace"].iloc[1] != pytest.approx(frame["trace"].iloc[0], rel=1e-6)


@pytest.mark.slow
def test_free_particle_becomes_nondegenerate(free_system, free_orbit):
    result = perturb_to_nondegenerate(free_system, free_orbit, 2, 0.01)
    assert result.score > 1e-3
    assert result.orbit.residual <= 1e-8
    assert max(abs(c) for c in result.coefficients) <= 0.01
    assert all(v.nondegenerate for v in result.verdicts.values())
