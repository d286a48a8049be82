"""JSON, CSV and gnuplot output for reports.

Every JSON file is an envelope ``{schema, command, version, seed, config,
wall_clock_seconds, result}``.  CSV floats carry 17 significant digits so
values round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import fields
from pathlib import Path

from . import __version__
from .ldlab import REPORT_SCHEMA, DeviationReport, GridPoint

__all__ = ["envelope", "format_value", "write_json", "write_csv", "write_dat", "deviation_table", "dumps"]

POINT_FIELDS = [f.name for f in fields(GridPoint)]


def envelope(command: str, seed, config: dict, result: dict, wall_clock: float) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "wall_clock_seconds": wall_clock,
        "result": result,
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True)


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(header, rows, path: str | Path) -> None:
    Path(path).write_text(_csv_text(header, rows))


def write_dat(header, rows, path: str | Path) -> None:
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    lines = ["# " + " ".join(header)]
    for row in rows:
        lines.append(" ".join(format_value(v) if v is not None else "nan" for v in row).replace("true", "1").replace("false", "0"))
    Path(path).write_text("\n".join(lines) + "\n")


def deviation_table(report: DeviationReport):
    """One row per grid point, fixed column order."""
    rows = [[getattr(p, name) for name in POINT_FIELDS] for p in report.points]
    return POINT_FIELDS, rows
