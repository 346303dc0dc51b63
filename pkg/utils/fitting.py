from typing import Optional, Tuple

import numpy as np


def linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """(slope, intercept, R²) of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    return float(slope), float(intercept), r2


def loglog_rate(widths, errors, floor: float) -> Optional[float]:
    """Slope of log(error) against log(width) over errors above ``floor``.

    None when fewer than two errors are above the floor.
    """
    widths = np.asarray(widths, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > floor
    if np.count_nonzero(keep) < 2:
        return None
    slope, _, _ = linear_fit(np.log(widths[keep]), np.log(errors[keep]))
    return slope
