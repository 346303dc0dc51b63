import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(angle):
    """Reduce angles to the canonical representative in [0, 2π)."""
    wrapped = np.mod(angle, TWO_PI)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


def angle_difference(a, b):
    """Shortest signed angular difference a − b, componentwise in [−π, π)."""
    return np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi


def torus_distance(x, y) -> float:
    """Flat torus distance between two configuration points."""
    return float(np.linalg.norm(angle_difference(x, y)))


def phase_difference(theta_a, theta_b) -> np.ndarray:
    """Difference of two phase points with the angle block wrapped."""
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    return np.concatenate(
        [angle_difference(theta_a[:2], theta_b[:2]), theta_a[2:] - theta_b[2:]]
    )


def phase_distance(theta_a, theta_b) -> float:
    """Euclidean distance on T*T², angles compared on the torus."""
    return float(np.linalg.norm(phase_difference(theta_a, theta_b)))
