"""Batch driver: validated experiment config in, JSON report and CSV series out."""

import json
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import psutil
from pydantic import ValidationError

from models.experiment import CheckResult, ExperimentConfig, OrbitSeed, RunReport, TaskName
from models.orbit import PeriodicOrbit
from models.system import MechanicalSystem
from services.flow_engine import integrate_flow, integrate_variational
from services.manifolds import angle_versus_tilt, split_manifolds
from services.orbit_lab import (
    charpoly_factorization_residual,
    find_periodic_orbit,
    regular_level_check,
    scan_short_orbits,
    twist_times,
)
from services.perturb import (
    B_of_h,
    b_complementarity,
    b_convergence,
    b_convergence_rate,
    build_abc_potential,
    build_adapted_frame,
    build_h_alpha_beta,
    build_tubular_chart,
    dS_rank,
    make_delta,
    measured_poincare_derivative,
    perturb_to_nondegenerate,
    pi_of_Z_check,
    predicted_poincare_derivative,
    sweep_coefficients,
)
from services.systems import build_system
from utils.errors import ConfigError
from utils.formatters import write_csv_atomic, write_json_atomic

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.json"
REPORT_FILE = "report.json"

# Fixed CSV layouts; a run without a series still gets the header
PLOT_SERIES = {
    "b_convergence": ["width", "alpha_error", "beta_error", "alpha_norm", "beta_norm"],
    "angle_vs_tilt": ["tilt", "angle", "fit"],
    "eigenvalue_loci": [
        "amplitude",
        "a",
        "b",
        "c",
        "trace",
        "lambda1_real",
        "lambda1_imag",
        "lambda2_real",
        "lambda2_imag",
    ],
}


class TaskOutcome(NamedTuple):
    results: dict
    checks: List[CheckResult]
    series: Dict[str, List[dict]]


def _at_most(name: str, measured: float, threshold: float, detail: Optional[str] = None) -> CheckResult:
    measured = float(measured)
    return CheckResult(
        name=name,
        passed=bool(measured <= threshold),
        measured=measured,
        threshold=float(threshold),
        detail=detail,
    )


def _above(name: str, measured: float, threshold: float, detail: Optional[str] = None) -> CheckResult:
    measured = float(measured)
    return CheckResult(
        name=name,
        passed=bool(measured > threshold),
        measured=measured,
        threshold=float(threshold),
        detail=detail,
    )


def _records(frame) -> List[dict]:
    return json.loads(frame.to_json(orient="records", double_precision=15))


def resolve_jobs(jobs: int) -> int:
    """0 means one job per core."""
    if jobs > 0:
        return jobs
    return psutil.cpu_count(logical=True) or 1


def load_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read and validate a JSON experiment config.

    ``overrides`` are ``KEY=VALUE`` strings applied to the tolerances; values
    stay strings here and are coerced by the tolerance schema.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}:\n{e}") from e
    return apply_overrides(config, overrides)


def apply_overrides(config: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    if not overrides:
        return config
    pairs = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Tolerance override must look like KEY=VALUE, got {item!r}")
        pairs[key.strip()] = value.strip()
    try:
        tolerances = config.tolerances.with_overrides(pairs)
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"Bad tolerance override: {e}") from e
    return config.model_copy(update={"tolerances": tolerances})


def build_experiment_system(config: ExperimentConfig) -> MechanicalSystem:
    spec = config.system
    try:
        return build_system(
            spec.preset, spec.metric_inverse, spec.potential_terms, **spec.parameters
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Cannot build system from config: {e}") from e


class ExperimentRunner:
    """Runs one experiment config and writes its report files."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.tolerances = config.tolerances
        self.params = config.params
        self.jobs = resolve_jobs(config.jobs)
        self.system = build_experiment_system(config)
        self._handlers: Dict[TaskName, Callable[[], TaskOutcome]] = {
            TaskName.REGULARITY_SCAN: self._regularity_scan,
            TaskName.ORBIT_SCAN: self._orbit_scan,
            TaskName.CLASSIFY: self._classify,
            TaskName.PERTURB_NONDEGENERACY: self._perturb_nondegeneracy,
            TaskName.B_SURJECTIVITY: self._b_surjectivity,
            TaskName.PIZ_CHECK: self._piz_check,
            TaskName.MANIFOLD_SPLITTING: self._manifold_splitting,
        }

    # Orbits

    def _orbit(self, seed: Optional[OrbitSeed], field: str = "orbit") -> PeriodicOrbit:
        if seed is None:
            raise ConfigError(f"Task {self.config.task.value} needs params.{field}")
        return find_periodic_orbit(
            self.system,
            self.config.k,
            seed.theta0,
            seed.T,
            self.params.m_max,
            self.tolerances,
        )

    def _orbit_checks(self, orbit: PeriodicOrbit, label: str) -> List[CheckResult]:
        tolerances = self.tolerances
        verdicts = list(orbit.verdicts.values())
        agreement = sum(v.agrees for v in verdicts) / len(verdicts) if verdicts else 1.0
        checks = [
            _at_most(f"{label} closure residual", orbit.residual, tolerances.closure_tol),
            _at_most(
                f"{label} monodromy symplectic defect",
                orbit.monodromy.symplectic_defect(),
                tolerances.tol_symp,
            ),
            CheckResult(
                name=f"{label} verdict agreement",
                passed=agreement == 1.0,
                measured=agreement,
                threshold=1.0,
                detail=None if agreement == 1.0 else "eigenvalue and multiplicity tests disagree",
            ),
        ]
        for m in self.params.charpoly_orders:
            checks.append(
                _at_most(
                    f"{label} charpoly residual m={m}",
                    charpoly_factorization_residual(orbit, m),
                    tolerances.charpoly_tol,
                )
            )
        return checks

    # Tasks

    def _regularity_scan(self) -> TaskOutcome:
        level = regular_level_check(
            self.system, self.config.k, self.params.level_grid_density, self.tolerances
        )
        check = CheckResult(
            name="energy level is regular",
            passed=level.is_regular,
            measured=level.min_gradient_norm,
            threshold=self.tolerances.tol_reg,
            detail=None if level.is_regular else f"critical values {level.critical_values}",
        )
        return TaskOutcome({"level": level.model_dump(mode="json")}, [check], {})

    def _orbit_scan(self) -> TaskOutcome:
        scan = scan_short_orbits(
            self.system,
            self.config.k,
            self.params.T_max,
            self.params.grid_density,
            self.params.m_max,
            self.jobs,
            self.tolerances,
        )
        checks = []
        for i, orbit in enumerate(scan):
            checks.extend(self._orbit_checks(orbit, f"orbit {i}"))
        results = {
            "orbits": [orbit.report() for orbit in scan],
            "min_period": scan.min_period,
            "seeds_tried": scan.seeds_tried,
        }
        return TaskOutcome(results, checks, {})

    def _audit(self) -> List[CheckResult]:
        """Symplecticity and energy conservation from random starts."""
        rng = np.random.default_rng(self.config.seed)
        tol = self.tolerances.shooting_tol
        worst_defect, worst_drift = 0.0, 0.0
        for _ in range(self.params.audit_samples):
            theta = np.concatenate(
                [rng.uniform(0.0, 2 * np.pi, 2), rng.normal(0.0, 1.0, 2)]
            )
            T = float(rng.uniform(0.0, self.params.audit_horizon))
            _, matrix = integrate_variational(self.system, theta, T, tol=tol, tolerances=self.tolerances)
            trajectory = integrate_flow(self.system, theta, T, tol=tol, tolerances=self.tolerances)
            scale = max(1.0, abs(float(trajectory.energies[0])))
            worst_defect = max(worst_defect, matrix.symplectic_defect())
            worst_drift = max(worst_drift, trajectory.energy_drift / scale)
        detail = f"{self.params.audit_samples} samples, T ≤ {self.params.audit_horizon}"
        return [
            _at_most("audit symplectic defect", worst_defect, self.tolerances.tol_symp, detail),
            _at_most("audit relative energy drift", worst_drift, self.tolerances.tol_energy, detail),
        ]

    def _classify(self) -> TaskOutcome:
        orbit = self._orbit(self.params.orbit)
        checks = self._orbit_checks(orbit, "orbit")
        results = {
            "orbit": orbit.report(),
            "nondegenerate_orders": sorted(m for m, v in orbit.verdicts.items() if v.nondegenerate),
            "degenerate_orders": sorted(m for m, v in orbit.verdicts.items() if not v.nondegenerate),
        }
        if self.params.audit_samples:
            checks.extend(self._audit())
        if self.params.twist_horizon > 0:
            horizontal = np.eye(4)[:, :2]
            twist = twist_times(
                self.system,
                orbit.theta0,
                horizontal,
                self.params.twist_horizon,
                tolerances=self.tolerances,
            )
            results["twist"] = twist.model_dump(mode="json")
            checks.append(
                CheckResult(
                    name="twist times isolated",
                    passed=not twist.flagged,
                    measured=float(len(twist.non_discrete_intervals)),
                    threshold=0.0,
                    detail=f"{len(twist.times)} isolated roots on [0, {self.params.twist_horizon}]",
                )
            )
        return TaskOutcome(results, checks, {})

    def _perturb_nondegeneracy(self) -> TaskOutcome:
        orbit = self._orbit(self.params.orbit)
        result = perturb_to_nondegenerate(
            self.system,
            orbit,
            self.params.nondegeneracy_m,
            self.params.coefficient_budget,
            tolerances=self.tolerances,
        )
        size = max(abs(c) for c in result.coefficients)
        checks = [
            _above(
                f"root-of-unity distance up to order {result.order}",
                result.score,
                self.tolerances.nondegeneracy_margin,
            ),
            _at_most("perturbed orbit residual", result.orbit.residual, self.tolerances.closure_tol),
            _at_most("coefficient size within budget", size, self.params.coefficient_budget),
        ]
        results = {"orbit": orbit.report(), "perturbation": result.report()}
        return TaskOutcome(results, checks, {})

    def _b_surjectivity(self) -> TaskOutcome:
        orbit = self._orbit(self.params.orbit)
        tolerances = self.tolerances
        t0 = self.params.t0_fraction * orbit.T_min
        widths = sorted((w * orbit.T_min for w in self.params.widths), reverse=True)

        chart = build_tubular_chart(self.system, orbit, t0, 2.0 * widths[0], tolerances)
        delta = make_delta(t0, widths[-1])
        vectors = [
            B_of_h(self.system, orbit, build_h_alpha_beta(chart, alpha, beta, delta), tolerances=tolerances)
            for alpha, beta in ((1.0, 0.0), (0.0, 1.0))
        ]
        complementarity = b_complementarity(self.system, orbit, vectors)
        convergence = b_convergence(self.system, orbit, t0, widths, tolerances=tolerances)

        errors = (convergence["alpha_error"] + convergence["beta_error"]).to_numpy()
        rate = b_convergence_rate(convergence, tolerances)
        checks = [
            _at_most("B(h) tangency to the level", max(complementarity.tangency), tolerances.tangency_tol),
            CheckResult(
                name="W1 components have rank 2",
                passed=complementarity.gram_rank == 2,
                measured=float(complementarity.gram_rank),
                threshold=2.0,
            ),
            _above(
                "B(h) family leaves the flow direction",
                complementarity.non_containment_residual,
                tolerances.non_containment_tol,
            ),
            CheckResult(
                name="limit formula error is linear in the width",
                passed=rate is None or rate >= self.params.min_convergence_rate,
                measured=rate,
                threshold=self.params.min_convergence_rate,
                detail="errors at the integration floor" if rate is None else f"errors {errors.tolist()}",
            ),
        ]
        results = {
            "orbit": orbit.report(),
            "t0": t0,
            "vectors": [v.tolist() for v in vectors],
            "complementarity": complementarity.model_dump(mode="json"),
        }
        return TaskOutcome(results, checks, {"b_convergence": _records(convergence)})

    def _piz_check(self) -> TaskOutcome:
        orbit = self._orbit(self.params.orbit)
        tolerances = self.tolerances
        t1 = self.params.t0_fraction * orbit.T_min
        a, b, c = self.params.coefficients
        frame = build_adapted_frame(self.system, orbit, t1, tolerances=tolerances)
        piz = pi_of_Z_check(self.system, orbit, t1, a, b, c, frame=frame, tolerances=tolerances)
        rank = dS_rank(self.system, orbit, t1, frame=frame, tolerances=tolerances)
        smallest = float(np.min(rank.singular_values))

        checks = [
            _at_most("printed formula matches commutator", piz.discrepancy, tolerances.commutator_tol),
            _at_most("pi(Z) is traceless", abs(piz.trace), tolerances.trace_tol),
            CheckResult(
                name="dS has rank 3",
                passed=rank.rank == 3 and smallest > 1e-4,
                measured=smallest,
                threshold=1e-4,
                detail=f"rank {rank.rank}",
            ),
        ]
        results = {
            "orbit": orbit.report(),
            "t1": t1,
            "pi_of_Z": piz.model_dump(mode="json"),
            "dS": rank.model_dump(mode="json"),
        }

        if self.params.measure_derivative:
            width = tolerances.delta_width_factor * orbit.T_min
            term = build_abc_potential(self.system, orbit, t1, a, b, c, width=width, tolerances=tolerances)
            predicted = predicted_poincare_derivative(
                self.system, orbit, t1, a, b, c, frame=frame, tolerances=tolerances
            )
            measured = measured_poincare_derivative(self.system, orbit, term, tolerances=tolerances)
            relative = float(np.linalg.norm(measured - predicted)) / max(
                float(np.linalg.norm(predicted)), 1e-12
            )
            threshold = max(1e-4, self.params.derivative_constant * width)
            checks.append(_at_most("measured dP derivative matches prediction", relative, threshold))
            results["derivative"] = {
                "width": width,
                "predicted": predicted.tolist(),
                "measured": measured.tolist(),
                "relative_error": relative,
            }

        series = {}
        if self.params.sweep_amplitudes:
            sweep = sweep_coefficients(
                self.system,
                orbit,
                t1,
                self.params.sweep_direction,
                self.params.sweep_amplitudes,
                tolerances=tolerances,
            )
            series["eigenvalue_loci"] = _records(sweep)
        return TaskOutcome(results, checks, series)

    def _manifold_splitting(self) -> TaskOutcome:
        orbit1 = self._orbit(self.params.orbit)
        orbit2 = (
            self._orbit(self.params.second_orbit, "second_orbit")
            if self.params.second_orbit is not None
            else orbit1
        )
        tolerances = self.tolerances
        tilt = self.params.tilt
        split = split_manifolds(
            self.system, orbit1, orbit2, self.config.k, tilt, self.jobs, tolerances
        )
        before = np.nan if split.angle_before is None else split.angle_before
        after = np.nan if split.angle_after is None else split.angle_after
        checks = [
            _at_most("branches coincide before the tilt", before, tolerances.tol_angle),
            _above("crossing angle after the tilt", after, self.params.min_split_angle),
            _at_most("graph potential collar blend", split.blend_defect, tolerances.blend_tol),
        ]
        for i, residual in enumerate(split.orbit_residuals, start=1):
            checks.append(_at_most(f"orbit {i} persists", residual, tolerances.closure_tol))
        results = {"split": split.report()}

        series = {}
        if self.params.tilt_magnitudes:
            frame = angle_versus_tilt(
                self.system,
                orbit1,
                orbit2,
                self.config.k,
                self.params.tilt_magnitudes,
                tilt,
                self.jobs,
                tolerances,
            )
            series["angle_vs_tilt"] = _records(frame)
            results["angle_fit"] = dict(frame.attrs)
            checks.append(_above("angle is linear in the tilt", frame.attrs["r2"], self.params.min_r2))
        return TaskOutcome(results, checks, series)

    # Driver

    def run(self, out_dir: Optional[Union[str, Path]] = None) -> RunReport:
        out = Path(out_dir or self.config.output_dir)
        task = self.config.task
        logger.info(f"Running {task.value} ({self.config.name}) with {self.jobs} job(s)")
        started = time.perf_counter()
        try:
            outcome = self._handlers[task]()
        except Exception as e:
            logger.error(f"Task {task.value} failed: {str(e)}")
            raise

        results = {
            "name": self.config.name,
            "task": task.value,
            "k": self.config.k,
            "seed": self.config.seed,
            "results": outcome.results,
        }
        write_json_atomic(out / RESULTS_FILE, results)
        report = RunReport(
            name=self.config.name,
            task=task,
            config=self.config.model_dump(mode="json"),
            results=outcome.results,
            series=outcome.series,
            checks=outcome.checks,
            tolerance_audit=self.tolerances.model_dump(),
            wall_clock=time.perf_counter() - started,
        )
        artifacts = [RESULTS_FILE] + [str(path.name) for path in emit_plot_data(report, out)]
        report = report.model_copy(update={"artifacts": artifacts + [REPORT_FILE]})
        write_json_atomic(out / REPORT_FILE, report.model_dump(mode="json"))

        for failure in report.failures:
            logger.warning(
                f"Check failed: {failure.name} (measured {failure.measured}, threshold {failure.threshold})"
            )
        logger.info(f"{len(report.checks) - len(report.failures)}/{len(report.checks)} checks passed")
        return report


def run(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> RunReport:
    return ExperimentRunner(config).run(out_dir)


def emit_plot_data(report: RunReport, out_dir: Union[str, Path]) -> List[Path]:
    """One CSV per plot series; a series the run did not produce is header-only."""
    out = Path(out_dir)
    return [
        write_csv_atomic(out / f"{name}.csv", report.series.get(name, []), columns)
        for name, columns in PLOT_SERIES.items()
    ]
