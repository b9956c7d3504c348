"""Per-window result tables with mean and standard-error rows."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError

METRIC_COLUMNS = ("R-TE", "V-TE", "CF", "CF-adj", "CF/V0", "CF-adj/V0", "TC", "TC/V0", "Vol")
HEADER = ("year",) + METRIC_COLUMNS
NA = "N/A"


def fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    return f"{x:.3E}"


def summarize(rows: Sequence[dict]) -> tuple[dict, dict]:
    """Column means and standard errors (sample std over sqrt(count)).

    With a single window the standard error is undefined and reported as None.
    """
    if not rows:
        raise DataError("report needs at least one window")
    mean, stderr = {}, {}
    for c in METRIC_COLUMNS:
        vals = np.array([r[c] for r in rows], dtype=float)
        mean[c] = float(vals.mean())
        stderr[c] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else None
    return mean, stderr


def report_lines(labels: Sequence[str], rows: Sequence[dict]) -> list[list[str]]:
    if len(labels) != len(rows):
        raise DataError("one label per window is required")
    mean, stderr = summarize(rows)
    lines = [list(HEADER)]
    for label, r in zip(labels, rows):
        lines.append([str(label)] + [fmt(r[c]) for c in METRIC_COLUMNS])
    lines.append(["mean"] + [fmt(mean[c]) for c in METRIC_COLUMNS])
    lines.append(["stderr"] + [fmt(stderr[c]) for c in METRIC_COLUMNS])
    return lines


def write_report(labels: Sequence[str], rows: Sequence[dict], out_dir: str | Path,
                 stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (table layout) and ``<stem>.json`` (full precision)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    lines = report_lines(labels, rows)
    csv_path.write_text("".join(",".join(line) + "\n" for line in lines), encoding="utf-8")
    mean, stderr = summarize(rows)
    payload = {
        "columns": list(METRIC_COLUMNS),
        "windows": [{"year": str(l), **{c: float(r[c]) for c in METRIC_COLUMNS}} for l, r in zip(labels, rows)],
        "mean": mean,
        "stderr": stderr,
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def read_report_json(path: str | Path) -> tuple[list[str], list[dict]]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        windows = payload["windows"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    return [w["year"] for w in windows], windows
