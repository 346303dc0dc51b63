import numpy as np
import pytest

from utils.fitting import linear_fit, loglog_rate


def test_linear_fit():
    x = np.array([1e-4, 1e-3, 1e-2])
    slope, intercept, r2 = linear_fit(x, 3.0 * x + 1e-5)
    assert slope == pytest.approx(3.0)
    assert intercept == pytest.approx(1e-5, abs=1e-10)
    assert r2 == pytest.approx(1.0)


@pytest.mark.parametrize("power", [1.0, 2.0, 0.5])
def test_loglog_rate_recovers_power(power):
    widths = np.array([0.04, 0.02, 0.01, 0.005])
    assert loglog_rate(widths, 7.0 * widths**power, floor=1e-12) == pytest.approx(power)


def test_stalled_errors_have_a_small_rate():
    """Errors that barely move across halvings of the width."""
    rate = loglog_rate([0.04, 0.02, 0.01], [1e-3, 9e-4, 8.5e-4], floor=1e-12)
    assert rate < 0.2


def test_errors_at_the_floor_give_no_rate():
    assert loglog_rate([0.04, 0.02, 0.01], [1e-3, 1e-13, 1e-14], floor=1e-10) is None
    assert loglog_rate([0.04, 0.02, 0.01], [2e-3, 1e-3, 1e-14], floor=1e-10) == pytest.approx(1.0)
