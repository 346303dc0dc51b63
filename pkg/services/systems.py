"""Mechanical systems on the flat torus and the Legendre correspondence."""

import logging
from typing import Iterable, Optional

import numpy as np

from models.phase import PhasePoint, StateLike, TangentPoint, as_state
from models.system import HamiltonianJet, MechanicalSystem, MetricInverse
from models.terms import Harmonic, PerturbationTerm, TrigPolynomialTerm
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


def hamiltonian(sys: MechanicalSystem, theta: StateLike) -> float:
    """H(x, p) = ½ pᵀG⁻¹(x)p + ΣU_i(x)."""
    return sys.hamiltonian_value(as_state(theta))


def derivatives(sys: MechanicalSystem, theta: StateLike, order: int = 3) -> HamiltonianJet:
    """Analytic partial derivatives of H; entries above ``order`` are zeroed."""
    if order not in (1, 2, 3):
        raise InvalidInputError(f"Derivative order must be 1, 2 or 3, got {order}")
    jet = sys.hamiltonian_jet(as_state(theta))
    if order < 3:
        jet = jet._replace(
            H_xxx=np.zeros_like(jet.H_xxx),
            H_xxp=np.zeros_like(jet.H_xxp),
            H_xpp=np.zeros_like(jet.H_xpp),
        )
    if order < 2:
        jet = jet._replace(
            H_xx=np.zeros_like(jet.H_xx),
            H_xp=np.zeros_like(jet.H_xp),
            H_pp=np.zeros_like(jet.H_pp),
        )
    return jet


def legendre_transform(sys: MechanicalSystem, theta_tm: TangentPoint) -> PhasePoint:
    """p = G(x)v."""
    x = theta_tm.x.as_array()
    momentum = np.linalg.solve(sys.metric_inverse.matrix(x), np.asarray(theta_tm.v))
    return PhasePoint(x=theta_tm.x, p=(float(momentum[0]), float(momentum[1])))


def inverse_legendre_transform(sys: MechanicalSystem, theta: PhasePoint) -> TangentPoint:
    """v = G⁻¹(x)p."""
    velocity = sys.metric_inverse.matrix(theta.x.as_array()) @ np.asarray(theta.p)
    return TangentPoint(x=theta.x, v=(float(velocity[0]), float(velocity[1])))


def energy_function(sys: MechanicalSystem, theta_tm: TangentPoint) -> float:
    """E_L(x, v) = L_v·v − L = ½ vᵀG(x)v + U(x)."""
    x = theta_tm.x.as_array()
    velocity = np.asarray(theta_tm.v)
    momentum = np.linalg.solve(sys.metric_inverse.matrix(x), velocity)
    return 0.5 * float(momentum @ velocity) + sys.potential(x)


def add_potential(sys: MechanicalSystem, term: PerturbationTerm) -> MechanicalSystem:
    """System for H + f; the original system is left untouched."""
    return sys.model_copy(
        update={
            "potential_terms": [*sys.potential_terms, term],
            "name": f"{sys.name}+{getattr(term, 'kind', 'term')}",
        }
    )


def _trig(harmonics: Iterable[tuple]) -> TrigPolynomialTerm:
    return TrigPolynomialTerm(
        harmonics=[Harmonic(k=k, cos=c, sin=s) for k, c, s in harmonics]
    )


def free_particle() -> MechanicalSystem:
    return MechanicalSystem(name="free-particle")


def pendulum_rotor(mu: float = 1.0) -> MechanicalSystem:
    """H = ½|p|² − μ cos x1: a pendulum in x1 times a free rotor in x2."""
    if mu <= 0:
        raise InvalidInputError(f"Pendulum strength must be positive, got {mu}")
    return MechanicalSystem(
        name="pendulum-rotor",
        potential_terms=[_trig([((1, 0), -mu, 0.0)])],
    )


def anisotropic_pendulum(with_pendulum: bool = True) -> MechanicalSystem:
    """G⁻¹ = diag(1, 1 + ½cos x1), optionally with U = −cos x1."""
    metric = MetricInverse(g22=_trig([((0, 0), 1.0, 0.0), ((1, 0), 0.5, 0.0)]))
    terms = [_trig([((1, 0), -1.0, 0.0)])] if with_pendulum else []
    return MechanicalSystem(
        name="anisotropic-pendulum", metric_inverse=metric, potential_terms=terms
    )


def coupled_pendulum_rotor(coupling: float, mu: float = 1.0) -> MechanicalSystem:
    """Pendulum-rotor plus ε·cos x2·(1 + cos x1), which vanishes to first order on x1 = π."""
    half = 0.5 * coupling
    return MechanicalSystem(
        name="coupled-pendulum-rotor",
        potential_terms=[
            _trig(
                [
                    ((1, 0), -mu, 0.0),
                    ((0, 1), coupling, 0.0),
                    ((1, 1), half, 0.0),
                    ((1, -1), half, 0.0),
                ]
            )
        ],
    )


def double_well_rotation() -> MechanicalSystem:
    """U = −cos x1 − cos x2: two decoupled harmonic blocks at the origin."""
    return MechanicalSystem(
        name="double-well",
        potential_terms=[_trig([((1, 0), -1.0, 0.0), ((0, 1), -1.0, 0.0)])],
    )


PRESETS = {
    "free-particle": free_particle,
    "pendulum-rotor": pendulum_rotor,
    "anisotropic-pendulum": anisotropic_pendulum,
    "coupled-pendulum-rotor": coupled_pendulum_rotor,
    "double-well": double_well_rotation,
}


def build_system(
    preset: Optional[str] = None,
    metric_inverse: Optional[MetricInverse] = None,
    potential_terms: Optional[Iterable[PerturbationTerm]] = None,
    **preset_args,
) -> MechanicalSystem:
    """System from a preset name and/or explicit metric and potential terms.

    Explicit potential terms are added on top of the preset's terms.
    """
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise InvalidInputError(
                    f"Unknown preset {preset!r}; choose from {sorted(PRESETS)}"
                )
            system = PRESETS[preset](**preset_args)
        else:
            system = MechanicalSystem()
        if metric_inverse is not None:
            system = MechanicalSystem(
                name=system.name,
                metric_inverse=metric_inverse,
                potential_terms=system.potential_terms,
            )
        for term in potential_terms or []:
            system = add_potential(system, term)
        return system
    except Exception as e:
        logger.error(f"Error building system: {str(e)}")
        raise
