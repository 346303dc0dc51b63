#!/usr/bin/env python3
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from utils.formatters import format_report_markdown  # noqa: E402


def load_report(path: Path) -> dict:
    """Read a report.json, or the one inside a run directory."""
    if path.is_dir():
        path = path / "report.json"
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def list_failures(report: dict):
    failures = [check for check in report.get("checks", []) if not check["passed"]]
    if not failures:
        print("All checks passed.")
        return
    print(f"{len(failures)} failed check(s):")
    for check in failures:
        print(f"  {check['name']}")
        print(f"    measured:  {check.get('measured')}")
        print(f"    threshold: {check.get('threshold')}")
        if check.get("detail"):
            print(f"    detail:    {check['detail']}")


def show_tolerances(report: dict):
    audit = report.get("tolerance_audit", {})
    width = max((len(name) for name in audit), default=0)
    for name in sorted(audit):
        print(f"  {name.ljust(width)}  {audit[name]:g}")


def main():
    parser = argparse.ArgumentParser(description="Inspect a bumpy_torus run report")
    parser.add_argument("report", help="report.json or a run directory")
    parser.add_argument("--failures", action="store_true", help="Only list failed checks")
    parser.add_argument("--tolerances", action="store_true", help="Print the tolerance audit")
    args = parser.parse_args()

    try:
        report = load_report(Path(args.report))
    except (OSError, json.JSONDecodeError) as e:
        print(f"Error reading report: {str(e)}")
        return 2

    if args.failures:
        list_failures(report)
    else:
        print(format_report_markdown(report))
    if args.tolerances:
        print("Tolerances:")
        show_tolerances(report)
    return 0 if all(check["passed"] for check in report.get("checks", [])) else 1


if __name__ == "__main__":
    exit(main())
