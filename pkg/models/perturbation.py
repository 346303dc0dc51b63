from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import Field

from models.base import ArrayModel
from models.orbit import PeriodicOrbit, Verdict


class PiZCheck(ArrayModel):
    """Closed-form π(𝒵) against the reduction of the commutator expression."""

    coefficients: Tuple[float, float, float]
    printed: np.ndarray
    commutator: np.ndarray
    trace: float
    discrepancy: float


class DSRank(ArrayModel):
    """Linear map (a, b, c) ↦ (z11, z12, z21) and its rank."""

    matrix: np.ndarray
    rank: int
    singular_values: np.ndarray


class ComplementarityReport(ArrayModel):
    """Tangency, 𝒲₁-rank and non-containment of a family of B(h) vectors."""

    tangency: List[float]
    gram_rank: int
    gram_singular_values: np.ndarray
    non_containment_residual: float


class NondegeneracyResult(ArrayModel):
    term: Any
    t1: float
    coefficients: Tuple[float, float, float]
    width: float
    orbit: PeriodicOrbit
    verdicts: Dict[int, Verdict] = Field(default_factory=dict)
    score: float
    order: int

    def report(self) -> dict:
        return {
            "t1": self.t1,
            "coefficients": list(self.coefficients),
            "width": self.width,
            "score": self.score,
            "order": self.order,
            "new_dP": self.orbit.dP.tolist(),
            "residual": self.orbit.residual,
            "verdicts": [v.model_dump(mode="json") for _, v in sorted(self.verdicts.items())],
        }
