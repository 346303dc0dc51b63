"""Exception hierarchy shared by every service.

Input and configuration problems derive from ``ValueError`` as well, so callers
that only know the standard library still catch them.
"""

from typing import Any, Optional


class BumpyTorusError(Exception):
    """Base class for all library errors."""


class InvalidInputError(BumpyTorusError, ValueError):
    """Non-finite or out-of-range input."""


class ConfigError(BumpyTorusError, ValueError):
    """Experiment config or tolerance override rejected."""


class NumericalError(BumpyTorusError):
    """A numerical pipeline could not deliver a trustworthy result."""


class StiffnessError(NumericalError):
    """The integrator gave up (step-size underflow or solver failure)."""


class AccuracyError(NumericalError):
    """A refinement check disagreed with the coarse result."""


class NoOrbitError(NumericalError):
    """Newton shooting did not converge to a periodic orbit."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class DegenerateGuessError(NoOrbitError):
    """Newton shooting collapsed to a (near) zero period."""


class SingularFrameError(NumericalError):
    """The symplectic frame is undefined at a critical point of H."""


class ChartFailureError(NumericalError):
    """Tubular chart or adapted coordinates could not be built or evaluated."""


class NotHyperbolicError(NumericalError):
    """The Poincaré derivative has spectrum on the unit circle."""


class SectionError(NumericalError):
    """A return-map evaluation left the section or its allowed region."""


class BranchTooShortError(NumericalError):
    """A manifold branch does not contain a point and its return image."""


class ManifoldError(NumericalError):
    """A manifold construction is not available for the given system."""


class BlendError(ManifoldError):
    """The graph is too far from the energy level in the cutoff collar."""


class SupportOverlapError(ManifoldError):
    """A perturbation support meets the configuration projection of an orbit."""


class NoImprovementError(NumericalError):
    """The coefficient budget was exhausted without reaching nondegeneracy."""

    def __init__(self, message: str, best: Optional[Any] = None):
        super().__init__(message)
        self.best = best
