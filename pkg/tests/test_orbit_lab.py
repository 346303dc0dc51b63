import logging

import numpy as np
import pytest

from models.orbit import Stability
from services.orbit_lab import (
    charpoly_factorization_residual,
    classify_stability,
    find_periodic_orbit,
    is_n_elementary,
    minimal_period,
    regular_level_check,
    restricted_poincare,
    rho_eval,
    scan_short_orbits,
    symplectic_frame,
    synthetic_orbit,
    twist_times,
)
from services.systems import double_well_rotation
from utils.errors import DegenerateGuessError, InvalidInputError, SingularFrameError
from utils.symplectic import J4, multiplicity_of_one

TWO_PI = 2.0 * np.pi


def _rotation(angle):
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


def test_rotor_orbit_on_upper_equilibrium(s1_orbit):
    assert s1_orbit.T_min == pytest.approx(TWO_PI, abs=1e-8)
    multipliers = np.sort(s1_orbit.multipliers.real)
    np.testing.assert_allclose(multipliers, [np.exp(-TWO_PI), np.exp(TWO_PI)], rtol=1e-5)
    assert s1_orbit.stability == Stability.HYPERBOLIC
    assert abs(np.linalg.det(s1_orbit.dP) - 1.0) <= 1e-6
    assert sorted(s1_orbit.verdicts) == list(range(1, 21))
    for verdict in s1_orbit.verdicts.values():
        assert verdict.nondegenerate and verdict.agrees
        assert verdict.multiplicity_of_one == 1


def test_free_particle_orbit_is_degenerate_for_every_order(free_orbit):
    assert free_orbit.T_min == pytest.approx(TWO_PI, abs=1e-10)
    assert free_orbit.stability == Stability.PARABOLIC
    for verdict in free_orbit.verdicts.values():
        assert not verdict.nondegenerate
        assert verdict.multiplicity_of_one == 3
        assert verdict.agrees
        assert verdict.root_index == 0


def test_anisotropic_orbit_period(s3_orbit):
    assert s3_orbit.T_min == pytest.approx(8.885765876316732, abs=1e-8)
    assert s3_orbit.residual <= 1e-8
    assert s3_orbit.stability == Stability.HYPERBOLIC


def test_doubled_guess_reduces_to_minimal_period(s1_system):
    orbit = find_periodic_orbit(s1_system, 1.5, (np.pi, 0.0, 0.0, 1.0), 2 * TWO_PI, m_max=2)
    assert orbit.T_min == pytest.approx(TWO_PI, abs=1e-8)
    assert orbit.converged_period == pytest.approx(2 * TWO_PI, abs=1e-8)
    assert minimal_period(s1_system, orbit) == pytest.approx(TWO_PI, abs=1e-8)
    np.testing.assert_allclose(restricted_poincare(orbit), orbit.dP, atol=1e-12)


def test_perturbed_guess_converges_to_rotor_orbit(s1_system):
    orbit = find_periodic_orbit(s1_system, 1.5, (np.pi + 1e-4, 0.0, 1e-4, 1.0), 6.2, m_max=2)
    assert orbit.T_min == pytest.approx(TWO_PI, abs=1e-8)
    assert orbit.theta0.x.x1 == pytest.approx(np.pi, abs=1e-8)
    np.testing.assert_allclose(orbit.theta0.p, [0.0, 1.0], atol=1e-8)
    assert orbit.residual <= 1e-8


def test_minimal_period_reduces_repeatedly(free_system, free_orbit):
    twelvefold = free_orbit.model_copy(update={"converged_period": 12 * TWO_PI})
    assert minimal_period(free_system, twelvefold) == pytest.approx(TWO_PI, abs=1e-10)


def test_minimal_period_reports_the_divisor_cap(free_system, free_orbit, caplog):
    elevenfold = free_orbit.model_copy(update={"converged_period": 11 * TWO_PI})
    with caplog.at_level(logging.INFO, logger="services.orbit_lab"):
        assert minimal_period(free_system, elevenfold) == pytest.approx(11 * TWO_PI)
    assert "No divisor up to 8" in caplog.text


def test_bad_guesses_are_rejected(s1_system):
    with pytest.raises(DegenerateGuessError):
        find_periodic_orbit(s1_system, 1.5, (np.pi, 0.0, 0.0, 1.0), -1.0)
    with pytest.raises(DegenerateGuessError):
        find_periodic_orbit(s1_system, 1.0, (np.pi, 0.0, 0.0, 0.0), TWO_PI)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_characteristic_polynomial_factors(s1_orbit, m):
    assert charpoly_factorization_residual(s1_orbit, m) <= 1e-5


@pytest.mark.parametrize("theta", [(np.pi, 0.0, 0.0, 1.0), (0.3, 1.7, -0.4, 0.8)])
def test_frame_is_symplectic_and_adapted(s3_system, theta):
    frame = symplectic_frame(s3_system, theta)
    np.testing.assert_allclose(frame.gram(), J4, atol=1e-12)
    gradient = np.concatenate([-frame.u1[2:], frame.u1[:2]])
    assert gradient @ frame.u1 == pytest.approx(0.0, abs=1e-12)
    assert gradient @ frame.u2 == pytest.approx(0.0, abs=1e-12)
    assert gradient @ frame.u1s == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("orbit_name", ["s1_orbit", "s3_orbit"])
def test_monodromy_acts_on_the_frame(orbit_name, request):
    """dψ·u1 = u1 and dψ·u1s = c·u1 + u1s + ξ with ξ in the span of (u2, u2s)."""
    orbit = request.getfixturevalue(orbit_name)
    frame, monodromy = orbit.frame, orbit.monodromy.matrix
    np.testing.assert_allclose(monodromy @ frame.u1, frame.u1, atol=1e-7)
    image = monodromy @ frame.u1s
    c, xi_u2, coefficient, xi_u2s = frame.coordinates(image)
    assert coefficient == pytest.approx(1.0, abs=1e-6)
    xi = xi_u2 * frame.u2 + xi_u2s * frame.u2s
    np.testing.assert_allclose(c * frame.u1 + frame.u1s + xi, image, atol=1e-6 * max(1.0, np.max(np.abs(image))))
    gradient = np.concatenate([-frame.u1[2:], frame.u1[:2]])
    assert gradient @ xi == pytest.approx(0.0, abs=1e-6 * max(1.0, np.max(np.abs(xi))))


@pytest.mark.parametrize(
    "block, expected",
    [
        (np.diag([1.0, 2.0, 0.5]), 1),
        (np.array([[1.0, 0.3, 0.0], [0.0, 1.0, 75.0], [0.0, 0.0, 1.0]]), 3),
        (np.diag([0.9, 1.0, 1.0]), 2),
        (np.block([[np.ones((1, 1)), np.zeros((1, 2))], [np.zeros((2, 1)), _rotation(TWO_PI / 5)]]), 1),
    ],
)
def test_multiplicity_of_one_counts_eigenvalues(block, expected):
    assert multiplicity_of_one(block, 1e-6) == expected


def test_frame_needs_regular_point(s1_system):
    with pytest.raises(SingularFrameError):
        symplectic_frame(s1_system, (np.pi, 0.0, 0.0, 0.0))


def test_rotation_by_fifth_of_a_turn():
    dP = _rotation(TWO_PI / 5)
    assert is_n_elementary(dP, 4)
    assert not is_n_elementary(dP, 5)
    orbit = synthetic_orbit(dP)
    assert orbit.stability == Stability.ELLIPTIC
    assert not orbit.verdicts[5].nondegenerate
    assert orbit.verdicts[5].root_index in (1, 4)
    assert all(orbit.verdicts[m].nondegenerate for m in (1, 2, 3, 4, 6))
    assert all(verdict.agrees for verdict in orbit.verdicts.values())


@pytest.mark.parametrize(
    "dP, expected",
    [
        (np.diag([2.0, 0.5]), Stability.HYPERBOLIC),
        (np.diag([-2.0, -0.5]), Stability.HYPERBOLIC),
        (_rotation(1.0), Stability.ELLIPTIC),
        (np.array([[1.0, 3.0], [0.0, 1.0]]), Stability.PARABOLIC),
    ],
)
def test_classify_stability(dP, expected):
    assert classify_stability(dP) == expected


def test_rho_on_closed_orbit(s1_system, s1_orbit):
    value = rho_eval(s1_system, 1.5, s1_orbit.theta0, s1_orbit.T_min, 0.0)
    assert value.on_diagonal(1e-8)
    shifted = rho_eval(s1_system, 1.5, s1_orbit.theta0, s1_orbit.T_min, 0.01)
    assert shifted.normal_level_defect > 0
    assert not shifted.on_diagonal(1e-8)


def test_pendulum_level_through_saddle_is_not_regular(s1_system):
    check = regular_level_check(s1_system, 1.0, grid_density=8)
    assert not check.is_regular
    assert check.min_gradient_norm == 0.0
    assert check.critical_values == [-1.0, 1.0]
    assert check.suggested_delta == pytest.approx(0.5)


def test_free_particle_level_is_regular(free_system):
    check = regular_level_check(free_system, 0.5, grid_density=4)
    assert check.is_regular
    assert check.min_gradient_norm == pytest.approx(1.0, abs=1e-10)
    assert check.level_points == 4 * 4 * 8


def test_pendulum_level_above_separatrix_is_regular(s1_system):
    check = regular_level_check(s1_system, 1.5, grid_density=8)
    assert check.is_regular
    assert check.min_gradient_norm >= 1.0 - 1e-9
    assert check.suggested_delta is None


def test_twist_times_for_free_particle(free_system):
    vertical = [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    horizontal = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]
    hit = twist_times(free_system, (0.0, 0.0, 1.0, 0.0), vertical, 10.0)
    assert hit.times == [0.0]
    assert not hit.flagged
    miss = twist_times(free_system, (0.0, 0.0, 1.0, 0.0), horizontal, 10.0)
    assert miss.times == []
    with pytest.raises(InvalidInputError):
        twist_times(free_system, (0.0, 0.0, 1.0, 0.0), [[1.0, 0, 0, 0], [2.0, 0, 0, 0]], 1.0)


def test_twist_times_pendulum_oscillation(s1_system):
    """Near the lower equilibrium the vertical plane turns back onto the vertical at t = π, 2π."""
    vertical = [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    result = twist_times(s1_system, (0.0, 0.0, 1e-6, 1e-6), vertical, 7.0)
    assert result.times[0] == 0.0
    assert len(result.times) >= 2


def test_twist_times_evenly_spaced_for_harmonic_blocks():
    """At the double-well minimum g(t) = sin t·cos t, so roots are multiples of π/2."""
    frame = [[0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0]]
    result = twist_times(double_well_rotation(), (0.0, 0.0, 0.0, 0.0), frame, 7.0)
    assert not result.flagged
    np.testing.assert_allclose(result.times, 0.5 * np.pi * np.arange(5), atol=1e-6)


def test_scan_of_free_particle_finds_the_four_geodesics(free_system):
    scan = scan_short_orbits(free_system, 0.5, 7.0, grid_density=1, m_max=2)
    assert len(scan) == 4
    assert scan.min_period == pytest.approx(TWO_PI, abs=1e-8)
    momenta = sorted(tuple(np.round(orbit.theta0.p, 6) + 0.0) for orbit in scan)
    assert momenta == [(-1.0, 0.0), (0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]
    assert all(orbit.stability == Stability.PARABOLIC for orbit in scan)


def test_scan_of_empty_level_finds_nothing(s1_system):
    scan = scan_short_orbits(s1_system, -2.0, 7.0, grid_density=2)
    assert len(scan) == 0
    assert scan.seeds_tried == 0
    assert scan.min_period is None


@pytest.mark.slow
def test_scan_finds_rotor_orbit(s1_system):
    scan = scan_short_orbits(s1_system, 1.5, 6.5, grid_density=2, m_max=4)
    assert len(scan) >= 1
    assert scan.min_period is not None and scan.min_period <= 6.5
    rotors = [
        orbit
        for orbit in scan
        if abs(np.cos(orbit.theta0.x.x1) + 1.0) <= 1e-6 and abs(orbit.theta0.p[0]) <= 1e-6
    ]
    assert rotors
    assert rotors[0].T_min == pytest.approx(TWO_PI, abs=1e-7)
