"""Report serialization: deterministic JSON and frozen-schema CSV files.

Files are written to a temporary sibling and renamed into place, so readers
never observe a half-written report. The report JSON contains only
reproducible values; wall times go to a separate ``.timing.json`` sidecar
because they differ between otherwise identical runs.

Frozen CSV schemas (column order is part of the contract):
    {run_id}.trace.csv   step,metric,value
    compare.csv          policy,flops,speedup,rel_error
    sweep_{axis}.csv     value,flops,speedup,rel_error
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .sampler import RunReport

TRACE_FIELDS = ("step", "metric", "value")
COMPARE_FIELDS = ("policy", "flops", "speedup", "rel_error")
SWEEP_FIELDS = ("value", "flops", "speedup", "rel_error")


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def to_jsonable(value):
    """Recursively coerce numpy scalars/arrays into plain Python values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def dumps_json(payload: dict) -> str:
    return json.dumps(to_jsonable(payload), indent=2, ensure_ascii=False) + "\n"


def report_payload(report: RunReport) -> dict:
    """The deterministic portion of a run report, in a fixed key order."""
    return {
        "run_id": report.run_id,
        "policy": report.policy,
        "steps": report.steps,
        "plan_full_positions": list(report.plan_full_positions),
        "config": report.config,
        "final_latent": {
            "frobenius_norm": float(np.linalg.norm(report.final_latent)),
            "sha256": report.latent_digest(),
        },
        "flops": report.flops,
        "flops_planned": report.flops_planned,
        "full_model_flops": report.full_model_flops,
        "speedup": report.speedup,
        "speedup_planned": report.speedup_planned,
        "error_vs_oracle": report.error_vs_oracle,
        "ari": report.ari_rows,
        "distance_stats": report.distance_rows,
        "kmeans": report.kmeans_rows,
        "trajectory_pca": report.pca_rows,
    }


def write_report(report: RunReport, outdir: Path) -> dict:
    """Write report/trace/timing files; returns {kind: path}."""
    outdir = Path(outdir)
    paths = {}
    paths["report"] = atomic_write_text(
        outdir / f"{report.run_id}.report.json", dumps_json(report_payload(report))
    )
    paths["trace"] = atomic_write_text(
        outdir / f"{report.run_id}.trace.csv", _csv_text(TRACE_FIELDS, report.trace_rows)
    )
    paths["timing"] = atomic_write_text(
        outdir / f"{report.run_id}.timing.json", dumps_json({"timing": report.timing})
    )
    return paths


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_cell(row[k]) for k in fields})
    return buf.getvalue()


def _csv_cell(value):
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def write_compare_csv(rows, outdir: Path) -> Path:
    return atomic_write_text(Path(outdir) / "compare.csv", _csv_text(COMPARE_FIELDS, rows))


def write_sweep_csv(axis: str, rows, outdir: Path) -> Path:
    return atomic_write_text(Path(outdir) / f"sweep_{axis}.csv", _csv_text(SWEEP_FIELDS, rows))


def format_table(fields, rows) -> str:
    """Aligned monospace table for terminal output."""
    cells = [[str(f) for f in fields]]
    for row in rows:
        cells.append([_fmt(row[f]) for f in fields])
    widths = [max(len(r[i]) for r in cells) for i in range(len(fields))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
