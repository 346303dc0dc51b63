import numpy as np
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from models.terms import Harmonic, RadialBumpTerm, TrigPolynomialTerm
from utils.jets import Jet, jet_sum

X1, X2 = sp.symbols("x1 x2")
angles = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def _sympy_jet(expr, a, b):
    """Value, gradient, Hessian and third tensor of a sympy expression at (a, b)."""
    variables = (X1, X2)
    at = {X1: a, X2: b}
    grad = [float(sp.diff(expr, v).subs(at)) for v in variables]
    hess = [[float(sp.diff(expr, u, v).subs(at)) for v in variables] for u in variables]
    third = [
        [[float(sp.diff(expr, u, v, w).subs(at)) for w in variables] for v in variables]
        for u in variables
    ]
    return float(expr.subs(at)), np.array(grad), np.array(hess), np.array(third)


def _assert_jet(jet: Jet, expected, atol=1e-10):
    value, grad, hess, third = expected
    assert abs(jet.value - value) <= atol
    np.testing.assert_allclose(jet.grad, grad, atol=atol)
    np.testing.assert_allclose(jet.hess, hess, atol=atol)
    np.testing.assert_allclose(jet.third, third, atol=atol)


@settings(max_examples=20, deadline=None)
@given(a=angles, b=angles)
def test_product_and_composition_match_sympy(a, b):
    x1, x2 = Jet.coordinate(0, a), Jet.coordinate(1, b)
    jet = x1 * x1 * x2 + x2.sin() - 3.0 * (x1 * x2).cos()
    expr = X1**2 * X2 + sp.sin(X2) - 3 * sp.cos(X1 * X2)
    _assert_jet(jet, _sympy_jet(expr, a, b))


@settings(max_examples=20, deadline=None)
@given(a=angles, b=angles)
def test_quotient_matches_sympy(a, b):
    x1, x2 = Jet.coordinate(0, a), Jet.coordinate(1, b)
    jet = (x1 - x2) / (2.0 + (x1 * x2).cos())
    expr = (X1 - X2) / (2 + sp.cos(X1 * X2))
    _assert_jet(jet, _sympy_jet(expr, a, b))


def test_jet_sum_of_nothing_is_zero():
    assert jet_sum([]).is_zero()
    assert not jet_sum([Jet.constant(1.0)]).is_zero()


@settings(max_examples=15, deadline=None)
@given(a=angles, b=angles)
def test_trig_polynomial_jet(a, b):
    term = TrigPolynomialTerm(
        harmonics=[
            Harmonic(k=(1, 0), cos=-1.0),
            Harmonic(k=(1, 2), cos=0.3, sin=0.7),
            Harmonic(k=(0, 1), sin=-0.4),
        ]
    )
    expr = -sp.cos(X1) + 0.3 * sp.cos(X1 + 2 * X2) + 0.7 * sp.sin(X1 + 2 * X2) - 0.4 * sp.sin(X2)
    _assert_jet(term.jet(np.array([a, b])), _sympy_jet(expr, a, b))
    value, grad = term.value_and_gradient([a, b])
    assert abs(value - float(expr.subs({X1: a, X2: b}))) <= 1e-12
    assert np.allclose(grad, term.jet([a, b]).grad, atol=1e-12)


def test_radial_bump_jet_inside_and_outside():
    term = RadialBumpTerm(center=(3.0, 3.0), radius=0.5, height=2.0)
    rho = ((X1 - 3) ** 2 + (X2 - 3) ** 2) / sp.Rational(1, 4)
    expr = 2 * sp.exp(1 - 1 / (1 - rho))
    _assert_jet(term.jet([3.1, 2.8]), _sympy_jet(expr, 3.1, 2.8), atol=1e-9)
    assert term.jet([3.0, 3.6]).is_zero()
    assert term.value([3.0, 3.0]) == 2.0


def test_scaled_term_scales_every_order():
    term = TrigPolynomialTerm(harmonics=[Harmonic(k=(1, 1), cos=1.0)])
    x = np.array([0.4, -1.1])
    base, scaled = term.jet(x), term.scaled(-2.5).jet(x)
    np.testing.assert_allclose(scaled.third, -2.5 * base.third)
    assert scaled.value == -2.5 * base.value
