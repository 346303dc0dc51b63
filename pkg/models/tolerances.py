from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from config import config


class Tolerances(BaseModel):
    """Every named numerical tolerance with its default.

    Defaults for the commonly tuned values come from ``config.config`` (and so
    from ``BUMPY_*`` environment variables); the rest are fixed defaults that
    experiment configs and ``--tol-override`` may change.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Integration
    step_tol: float = Field(default=config.STEP_TOL, gt=0)
    shooting_tol: float = Field(default=config.SHOOTING_TOL, gt=0)
    tol_symp: float = Field(default=config.TOL_SYMP, gt=0)
    tol_energy: float = Field(default=config.TOL_ENERGY, gt=0)
    eps_normal: float = Field(default=config.EPS_NORMAL, gt=0)
    forcing_convergence_tol: float = Field(default=1e-8, gt=0)
    max_integration_time: float = Field(default=1e3, gt=0)

    # Periodic orbits
    residual_tol: float = Field(default=1e-10, gt=0)
    closure_tol: float = Field(default=1e-8, gt=0)
    level_tol: float = Field(default=1e-9, gt=0)
    newton_max_iter: int = Field(default=30, ge=1)
    min_period: float = Field(default=1e-3, gt=0)
    max_period_divisor: int = Field(default=8, ge=2)
    frame_tol: float = Field(default=1e-8, gt=0)
    tol_root: float = Field(default=config.TOL_ROOT, gt=0)
    tol_stability: float = Field(default=1e-6, gt=0)
    charpoly_tol: float = Field(default=1e-5, gt=0)
    det_tol: float = Field(default=1e-6, gt=0)
    tol_reg: float = Field(default=config.TOL_REG, gt=0)
    dedup_radius: float = Field(default=config.DEDUP_RADIUS, gt=0)
    twist_root_tol: float = Field(default=1e-10, gt=0)

    # Perturbations
    delta_width_factor: float = Field(default=config.DELTA_WIDTH_FACTOR, gt=0)
    chart_tol: float = Field(default=1e-8, gt=0)
    tangency_tol: float = Field(default=1e-7, gt=0)
    trace_tol: float = Field(default=1e-8, gt=0)
    commutator_tol: float = Field(default=1e-7, gt=0)
    nondegeneracy_margin: float = Field(default=1e-3, gt=0)
    non_containment_tol: float = Field(default=1e-3, gt=0)

    # Manifolds
    manifold_tol: float = Field(default=1e-6, gt=0)
    max_curve_angle: float = Field(default=0.2, gt=0)
    coincidence_tol: float = Field(default=1e-5, gt=0)
    tol_angle: float = Field(default=config.TOL_ANGLE, gt=0)
    blend_tol: float = Field(default=1e-3, gt=0)
    invariance_tol: float = Field(default=1e-5, gt=0)
    curl_tol: float = Field(default=1e-6, gt=0)

    def with_overrides(self, overrides: dict) -> "Tolerances":
        """Copy with validated overrides; unknown keys raise ``ValueError``."""
        unknown = sorted(set(overrides) - set(type(self).model_fields))
        if unknown:
            raise ValueError(f"Unknown tolerance(s): {', '.join(unknown)}")
        return type(self).model_validate({**self.model_dump(), **overrides})


DEFAULT_TOLERANCES = Tolerances()


def resolve(tolerances: Optional[Tolerances]) -> Tolerances:
    return DEFAULT_TOLERANCES if tolerances is None else tolerances
