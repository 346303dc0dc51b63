import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional

import pandas as pd


def _atomic_write(path: Path, text: str) -> Path:
    """Write through a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(temp_name, path)
    except Exception:
        if os.path.exists(temp_name):
            os.remove(temp_name)
        raise
    return path


def write_json_atomic(path: Path, data: Any) -> Path:
    """Sorted-key, indented JSON so identical data gives identical bytes."""
    return _atomic_write(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_csv_atomic(
    path: Path, rows: Iterable[dict], columns: Optional[List[str]] = None
) -> Path:
    """CSV with the given column order; header only when there are no rows."""
    frame = pd.DataFrame(list(rows))
    if columns is not None:
        frame = frame.reindex(columns=columns)
    return _atomic_write(path, frame.to_csv(index=False, float_format="%.17g"))


def format_report_markdown(report) -> str:
    """Readable summary of a run report.

    Args:
        report: a ``RunReport`` or its JSON dictionary

    Returns:
        Markdown with one line per check, failures marked
    """
    data = report if isinstance(report, dict) else report.model_dump(mode="json")
    checks = data.get("checks", [])
    passed = sum(1 for check in checks if check["passed"])
    markdown = f"## {data.get('name', 'run')} ({data.get('task', '?')})\n\n"
    markdown += f"*{passed}/{len(checks)} checks passed"
    if data.get("wall_clock") is not None:
        markdown += f" in {data['wall_clock']:.1f}s"
    markdown += "*\n\n"

    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        line = f"- [{status}] {check['name']}"
        if check.get("measured") is not None:
            line += f": measured {check['measured']:.6g}"
            if check.get("threshold") is not None:
                line += f" (threshold {check['threshold']:.6g})"
        if check.get("detail"):
            line += f" ({check['detail']})"
        markdown += line + "\n"

    if data.get("artifacts"):
        markdown += "\n**Artifacts:**\n"
        for artifact in data["artifacts"]:
            markdown += f"- {artifact}\n"
    return markdown
