"""CSV, VTK and metadata output for experiment results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .. import __version__
from ..mesh import write_vtk


def _fmt(v):
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, rows: list[dict]):
    path = Path(path)
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, float("nan"))) for c in columns])


def read_csv(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def failure_list(result) -> str:
    """Machine-readable list of failed checks (one JSON object per line)."""
    return "\n".join(json.dumps({"check": c.name, "detail": c.detail})
                     for c in result.checks if not c.passed)


def write_outputs(out_dir, cfg, result, timings: dict):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "report.csv", result.report)
    if result.series:
        write_csv(out / "series.csv", result.series)
    for name, rows in result.tables.items():
        write_csv(out / f"{name}.csv", rows)
    if result.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for name, mesh, cell_data, point_data in result.snapshots:
            write_vtk(snap_dir / f"{name}.vtk", mesh, cell_data, point_data, title=name)
    lines = [f"tool = hodgeheat {__version__}", f"experiment = {cfg.kind}"]
    lines += [f"timing.{k} = {v:.3f}s" for k, v in timings.items()]
    lines += [f"check.{c.name} = {'pass' if c.passed else 'FAIL'} ({c.detail})"
              for c in result.checks]
    lines.append("[config]")
    lines += [f"{k} = {v}" for k, v in cfg.raw.items()]
    (out / "meta.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
