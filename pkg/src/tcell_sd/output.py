"""CSV writers with ``#`` provenance headers, and plot-data extraction."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .analysis import ScenarioResult, SweepResult, observables_table
from .scenarios import header_lines

TRAJECTORY_COLUMNS = ("t", "N", "Np", "M", "total_naive", "trec_fraction", "thymic_export")
HALF_TREC_NOTE = ("artifact-defined loss-of-functionality age: first time trec_fraction < 0.5, "
                  "interpolated between records")


def fmt(v) -> str:
    """Shortest round-trip text for floats; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, header, columns, rows):
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_trajectory(path, result: ScenarioResult) -> Path:
    s = result.scenario
    header = header_lines(s, {"output": "trajectory"})
    return _write(path, header, TRAJECTORY_COLUMNS, observables_table(result.trajectory, s.params))


def write_metrics(path, result: ScenarioResult) -> Path:
    s = result.scenario
    names = [m.name for m in result.metrics]
    extra = {"output": "metrics", "metrics": ",".join(names)}
    if "half_trec_age" in names:
        extra["half_trec_age"] = HALF_TREC_NOTE
    header = header_lines(s, extra)
    rows = [(m.name, m.value, m.units) for m in result.metrics]
    return _write(path, header, ("metric", "value", "units"), rows)


def write_sweep(path, result: SweepResult) -> Path:
    spec = result.spec
    extra = {"output": "sweep"}
    for p, values in spec.axes:
        extra[f"sweep.axis.{p}"] = ",".join(fmt(v) for v in values)
    extra["sweep.metrics"] = ",".join(spec.metrics)
    header = header_lines(spec.base, extra)
    columns = result.columns + ("error",)
    rows = [r.coords + r.values + (r.error,) for r in result.rows]
    return _write(path, header, columns, rows)


def write_rows(path, header, columns, rows) -> Path:
    return _write(path, header, columns, rows)


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Columns and raw string rows of a CSV, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        return [], []
    return columns, [row for row in reader if row]


def plot_blocks(columns: list[str], rows: list[list[str]], wanted: list[str]) -> str:
    """Two-column ``x y`` blocks, one per requested series after the first.

    Blocks are separated by a blank line; points where either value is
    missing are skipped.
    """
    missing = [c for c in wanted if c not in columns]
    if missing:
        raise KeyError(f"column(s) {', '.join(missing)} not found; available: {', '.join(columns)}")
    ix = columns.index(wanted[0])
    series = wanted[1:] or wanted[:1]
    blocks = []
    for name in series:
        iy = columns.index(name)
        lines = [f"{row[ix]} {row[iy]}" for row in rows if row[ix] != "" and row[iy] != ""]
        blocks.append("\n".join(lines))
    text = "\n\n".join(blocks)
    return text + "\n" if text else ""
