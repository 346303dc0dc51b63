import json
from pathlib import Path

import numpy as np
import pytest

from models.experiment import CheckResult, RunReport, TaskName
from run import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_PASS, main
from services.experiment_runner import PLOT_SERIES, apply_overrides, emit_plot_data, load_config
from utils.errors import ConfigError
from utils.formatters import format_report_markdown

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_shipped_configs_validate():
    for path in sorted(CONFIGS.glob("*.json")):
        assert load_config(path).name


def test_tolerance_overrides():
    config = load_config(CONFIGS / "free_particle_regularity.json", ["tol_reg=1e-3", " tol_angle = 0.01"])
    assert config.tolerances.tol_reg == pytest.approx(1e-3)
    assert config.tolerances.tol_angle == pytest.approx(0.01)
    with pytest.raises(ConfigError):
        apply_overrides(config, ["no_such_tolerance=1"])
    with pytest.raises(ConfigError):
        apply_overrides(config, ["tol_reg"])
    with pytest.raises(ConfigError):
        apply_overrides(config, ["tol_reg=abc"])


def test_unknown_keys_are_rejected(tmp_path):
    path = _write_config(
        tmp_path,
        {"task": "regularity-scan", "system": {"preset": "free-particle"}, "k": 0.5, "colour": "red"},
    )
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_regularity_scan_writes_report_files(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["regularity-scan", "--config", str(CONFIGS / "free_particle_regularity.json"), "--out", str(out), "--jobs", "1"]
    )
    assert code == EXIT_PASS

    results = json.loads((out / "results.json").read_text(encoding="utf-8"))
    assert results["task"] == "regularity-scan"
    assert results["results"]["level"]["is_regular"] is True

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert [check["passed"] for check in report["checks"]] == [True]
    assert "report.json" in report["artifacts"]
    assert report["tolerance_audit"]["tol_reg"] == pytest.approx(1e-5)

    for name, columns in PLOT_SERIES.items():
        lines = (out / f"{name}.csv").read_text(encoding="utf-8").splitlines()
        assert lines == [",".join(columns)]


def test_runs_are_deterministic(tmp_path):
    config = str(CONFIGS / "free_particle_regularity.json")
    for name in ("a", "b"):
        assert main(["regularity-scan", "--config", config, "--out", str(tmp_path / name), "--seed", "3"]) == EXIT_PASS
    first = (tmp_path / "a" / "results.json").read_bytes()
    assert first == (tmp_path / "b" / "results.json").read_bytes()
    assert json.loads(first)["seed"] == 3


def test_task_mismatch_and_bad_jobs_are_config_errors(tmp_path):
    config = str(CONFIGS / "free_particle_regularity.json")
    assert main(["classify", "--config", config, "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR
    assert main(["regularity-scan", "--config", config, "--out", str(tmp_path), "--jobs", "-2"]) == EXIT_CONFIG_ERROR
    assert not (tmp_path / "results.json").exists()


def test_equilibrium_seed_is_a_numerical_failure(tmp_path):
    path = _write_config(
        tmp_path,
        {
            "task": "classify",
            "system": {"preset": "pendulum-rotor"},
            "k": 1.0,
            "params": {"orbit": {"theta0": [np.pi, 0.0, 0.0, 0.0], "T": 6.0}},
        },
    )
    assert main(["classify", "--config", path, "--out", str(tmp_path / "run")]) == EXIT_NUMERICAL_ERROR


def test_free_particle_piz_run(tmp_path):
    out = tmp_path / "piz"
    code = main(["piZ-check", "--config", str(CONFIGS / "free_particle_piz.json"), "--out", str(out)])
    assert code == EXIT_PASS
    results = json.loads((out / "results.json").read_text(encoding="utf-8"))["results"]
    np.testing.assert_allclose(results["pi_of_Z"]["printed"], [[-1.0, 2.0], [-1.0, 1.0]], atol=1e-8)
    assert results["dS"]["rank"] == 3


def test_empty_report_gives_header_only_series(tmp_path):
    report = RunReport(name="empty", task=TaskName.CLASSIFY, config={})
    paths = emit_plot_data(report, tmp_path)
    assert sorted(path.name for path in paths) == sorted(f"{name}.csv" for name in PLOT_SERIES)
    assert report.passed


def test_markdown_report_marks_failures():
    report = RunReport(
        name="demo",
        task=TaskName.CLASSIFY,
        config={},
        checks=[
            CheckResult(name="closure", passed=True, measured=1e-12, threshold=1e-8),
            CheckResult(name="agreement", passed=False, measured=0.5, threshold=1.0, detail="disagree"),
        ],
        artifacts=["results.json"],
    )
    markdown = format_report_markdown(report)
    assert markdown.startswith("## demo (classify)")
    assert "*1/2 checks passed" in markdown
    assert "- [PASS] closure: measured 1e-12 (threshold 1e-08)" in markdown
    assert "- [FAIL] agreement: measured 0.5 (threshold 1) (disagree)" in markdown
    assert "- results.json" in markdown
    assert format_report_markdown(report.model_dump(mode="json")) == markdown
