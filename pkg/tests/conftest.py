import numpy as np
import pytest

from services.orbit_lab import find_periodic_orbit
from services.systems import anisotropic_pendulum, free_particle, pendulum_rotor

TWO_PI = 2.0 * np.pi
SQRT2 = np.sqrt(2.0)


@pytest.fixture(scope="session")
def free_system():
    return free_particle()


@pytest.fixture(scope="session")
def s1_system():
    return pendulum_rotor(mu=1.0)


@pytest.fixture(scope="session")
def s3_system():
    return anisotropic_pendulum()


@pytest.fixture(scope="session")
def free_orbit(free_system):
    """Closed geodesic x2 = 0 at k = 0.5."""
    return find_periodic_orbit(free_system, 0.5, (0.0, 0.0, 1.0, 0.0), TWO_PI, m_max=12)


@pytest.fixture(scope="session")
def s1_orbit(s1_system):
    """Rotor orbit on the pendulum's upper equilibrium at k = 1.5."""
    return find_periodic_orbit(s1_system, 1.5, (np.pi, 0.0, 0.0, 1.0), TWO_PI, m_max=20)


@pytest.fixture(scope="session")
def s3_orbit(s3_system):
    """x1 = π orbit of the anisotropic system: ẋ2 = p2/2, p2 = √2 at k = 1.5."""
    return find_periodic_orbit(s3_system, 1.5, (np.pi, 0.0, 0.0, SQRT2), TWO_PI * SQRT2)
