import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from models.phase import PhasePoint, TangentPoint, TorusPoint
from models.system import MechanicalSystem, MetricInverse
from models.terms import Harmonic, RadialBumpTerm, TrigPolynomialTerm
from services.systems import (
    PRESETS,
    add_potential,
    build_system,
    derivatives,
    energy_function,
    hamiltonian,
    inverse_legendre_transform,
    legendre_transform,
    pendulum_rotor,
)
from utils.errors import InvalidInputError

X1, X2, P1, P2 = sp.symbols("x1 x2 p1 p2")
coordinates = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def test_s1_energy_at_upper_equilibrium_rotor(s1_system):
    assert hamiltonian(s1_system, (np.pi, 0.0, 0.0, 1.0)) == pytest.approx(1.5, abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(x1=coordinates, x2=coordinates, p1=coordinates, p2=coordinates)
def test_anisotropic_derivatives_match_sympy(s3_system, x1, x2, p1, p2):
    H = sp.Rational(1, 2) * (P1**2 + (1 + sp.cos(X1) / 2) * P2**2) - sp.cos(X1)
    at = {X1: x1, X2: x2, P1: p1, P2: p2}
    xs, ps = (X1, X2), (P1, P2)
    jet = derivatives(s3_system, (x1, x2, p1, p2))

    assert jet.H == pytest.approx(float(H.subs(at)), abs=1e-12)
    np.testing.assert_allclose(jet.H_x, [float(sp.diff(H, v).subs(at)) for v in xs], atol=1e-12)
    np.testing.assert_allclose(jet.H_p, [float(sp.diff(H, v).subs(at)) for v in ps], atol=1e-12)
    np.testing.assert_allclose(
        jet.H_xp, [[float(sp.diff(H, a, j).subs(at)) for j in ps] for a in xs], atol=1e-12
    )
    np.testing.assert_allclose(
        jet.H_xxx,
        [[[float(sp.diff(H, a, b, c).subs(at)) for c in xs] for b in xs] for a in xs],
        atol=1e-12,
    )
    np.testing.assert_allclose(
        jet.H_xxp,
        [[[float(sp.diff(H, a, b, j).subs(at)) for j in ps] for b in xs] for a in xs],
        atol=1e-12,
    )


def test_hessian_is_symmetric_and_third_tensor_fully_symmetric(s3_system):
    jet = s3_system.hamiltonian_jet(np.array([0.3, 1.2, -0.7, 0.9]))
    hessian, third = jet.hessian(), jet.third_tensor()
    np.testing.assert_allclose(hessian, hessian.T)
    for axes in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
        np.testing.assert_allclose(third, third.transpose(axes), atol=1e-14)


def test_lower_order_derivatives_are_zeroed(s3_system):
    jet = derivatives(s3_system, (0.3, 1.2, -0.7, 0.9), order=1)
    assert not jet.H_xx.any() and not jet.H_pp.any() and not jet.H_xxx.any()
    with pytest.raises(InvalidInputError):
        derivatives(s3_system, (0.3, 1.2, -0.7, 0.9), order=4)


def test_legendre_transform_and_energy(s3_system):
    tangent = TangentPoint.from_values(1.0, 2.0, 0.5, -0.25)
    phase = legendre_transform(s3_system, tangent)
    assert energy_function(s3_system, tangent) == pytest.approx(
        hamiltonian(s3_system, phase), abs=1e-12
    )
    back = inverse_legendre_transform(s3_system, phase)
    np.testing.assert_allclose(back.v, tangent.v, atol=1e-12)


def test_torus_point_reduces_angles():
    point = TorusPoint(x1=-0.5, x2=7.0)
    assert 0.0 <= point.x1 < 2 * np.pi and 0.0 <= point.x2 < 2 * np.pi
    assert point.distance(TorusPoint(x1=2 * np.pi - 0.5, x2=7.0 - 2 * np.pi)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        PhasePoint.from_values(0.0, 0.0, float("nan"), 0.0)


def test_add_potential_leaves_system_untouched(s1_system):
    bump = RadialBumpTerm(center=(1.0, 1.0), radius=0.3, height=0.1)
    perturbed = add_potential(s1_system, bump)
    assert len(perturbed.potential_terms) == len(s1_system.potential_terms) + 1
    state = np.array([1.0, 1.0, 0.2, 0.3])
    assert hamiltonian(perturbed, state) == pytest.approx(hamiltonian(s1_system, state) + 0.1)


def test_build_system_presets_and_extras():
    assert set(PRESETS) == {
        "free-particle",
        "pendulum-rotor",
        "anisotropic-pendulum",
        "coupled-pendulum-rotor",
        "double-well",
    }
    extra = TrigPolynomialTerm(harmonics=[Harmonic(k=(0, 1), cos=0.2)])
    system = build_system("pendulum-rotor", potential_terms=[extra], mu=2.0)
    assert system.potential(np.array([0.0, 0.0])) == pytest.approx(-2.0 + 0.2)
    with pytest.raises(InvalidInputError):
        build_system("spinning-top")
    with pytest.raises(InvalidInputError):
        pendulum_rotor(mu=-1.0)


def test_coupling_vanishes_on_the_rotor_orbit():
    system = build_system("coupled-pendulum-rotor", coupling=0.3)
    for x2 in np.linspace(0.0, 2 * np.pi, 7):
        gradient = system.potential_jet(np.array([np.pi, x2])).grad
        np.testing.assert_allclose(gradient, [0.0, 0.0], atol=1e-12)


def test_metric_must_be_positive_definite():
    indefinite = MetricInverse(g22=TrigPolynomialTerm(harmonics=[Harmonic(k=(1, 0), cos=1.0)]))
    with pytest.raises(ValidationError):
        MechanicalSystem(metric_inverse=indefinite)
