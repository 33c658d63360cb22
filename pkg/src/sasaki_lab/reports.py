"""Report writers: CSV, JSON and whitespace tables.

Every file carries ``format_version``. CSV and table files start with
``#`` comment lines (version and the effective run configuration), then
one column-header line, then data rows. Floats are written with 15
significant digits, so a report is a deterministic function of its
records.

Record columns, in order::

    suite model eps check quantity x0 x r lam measured bound margin tol flags passed

Vector cells are ``;``-joined; ``flags`` is ``|``-joined (empty if none).
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .comparison import ComparisonRecord
from .models import FORMAT_VERSION

RECORD_COLUMNS = ("suite", "model", "eps", "check", "quantity", "x0", "x", "r", "lam",
                  "measured", "bound", "margin", "tol", "flags", "passed")
PROBE_COLUMNS = ("model", "eps", "x0", "center", "half_widths", "t", "samples", "ratio",
                 "stderr", "factor", "N", "exponent", "skipped", "violated")
FORMATS = ("csv", "json", "table")


def fmt_float(v) -> str:
    """15 significant digits; ``nan``/``inf`` spelled out, no negative zero."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0.0:
        return "0"
    return format(v, ".15g")


def json_float(v):
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(fmt_float(v))


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(u) for u in v)
    return str(v)


def _json_value(v):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, float):
        return json_float(v)
    if isinstance(v, int):
        return v
    if isinstance(v, (list, tuple)):
        return [_json_value(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _json_value(u) for k, u in v.items()}
    try:
        return json_float(v)
    except (TypeError, ValueError):
        return str(v)


def record_row(rec: ComparisonRecord, tol_scale: float | None = None) -> dict:
    """Row dict of a record; ``tol_scale`` replaces the default ``1e-6``."""
    tol = rec.tol if tol_scale is None else tol_scale * (1.0 + abs(rec.bound))
    margin = rec.margin
    passed = rec.flagged or not (margin < -tol)
    return {"suite": rec.suite, "model": rec.model, "eps": float(rec.eps), "check": rec.check,
            "quantity": rec.quantity.value, "x0": [float(v) for v in rec.x0],
            "x": [float(v) for v in rec.x], "r": float(rec.r), "lam": float(rec.lam),
            "measured": float(rec.measured), "bound": float(rec.bound),
            "margin": float(margin), "tol": float(tol), "flags": "|".join(rec.flags),
            "passed": bool(passed)}


def config_lines(config: dict | None) -> list[str]:
    lines = [f"# format_version={FORMAT_VERSION}"]
    if config is not None:
        lines.append("# config=" + json.dumps(_json_value(config), sort_keys=True))
    return lines


def csv_text(rows: Sequence[dict], columns: Sequence[str], config: dict | None = None) -> str:
    buf = io.StringIO()
    for line in config_lines(config):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def table_text(rows: Sequence[dict], columns: Sequence[str], config: dict | None = None) -> str:
    """Whitespace-separated columns for gnuplot; empty strings become ``-``."""
    out = config_lines(config)
    out.append("# " + " ".join(columns))
    for row in rows:
        cells = [_cell(row[c]) or "-" for c in columns]
        out.append(" ".join(c.replace(" ", "_") for c in cells))
    return "\n".join(out) + "\n"


def json_text(rows: Sequence[dict], kind: str, config: dict | None = None, **extra) -> str:
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "config": _json_value(config),
           **{k: _json_value(v) for k, v in extra.items()},
           "records": [_json_value(r) for r in rows]}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def render(rows, columns, fmt: str, kind: str, config=None, **extra) -> str:
    if fmt == "csv":
        return csv_text(rows, columns, config)
    if fmt == "table":
        return table_text(rows, columns, config)
    if fmt == "json":
        return json_text(rows, kind, config, **extra)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def format_from_path(path, default: str = "csv") -> str:
    suf = Path(path).suffix.lower().lstrip(".")
    if suf in ("csv", "json"):
        return suf
    if suf in ("dat", "txt", "table"):
        return "table"
    return default


def suite_path(path, suite: str) -> Path:
    """``report.csv`` -> ``report.<suite>.csv``."""
    p = Path(path)
    return p.with_name(f"{p.stem}.{suite}{p.suffix}")


def emit_report(records: Iterable[ComparisonRecord], path, fmt: str | None = None,
                config: dict | None = None, suites: Sequence[str] | None = None,
                tol_scale: float | None = None) -> list[Path]:
    """Write comparison records, one file per suite.

    Parameters
    ----------
    path : path-like
        Base name; suite files are ``<stem>.<suite><suffix>``. With no
        records and no ``suites`` the base file itself is written with the
        header only.
    fmt : {'csv', 'json', 'table'}, optional
        Defaults to the file suffix.
    suites : sequence of str, optional
        Suites to write even when empty.

    Returns
    -------
    list of Path
        Files written, in suite order.
    """
    fmt = fmt or format_from_path(path)
    records = list(records)
    groups: dict[str, list] = {s: [] for s in (suites or ())}
    for rec in records:
        groups.setdefault(rec.suite, []).append(rec)
    written = []
    if not groups:
        Path(path).write_text(render([], RECORD_COLUMNS, fmt, "comparison", config))
        return [Path(path)]
    for suite in sorted(groups):
        rows = [record_row(r, tol_scale) for r in groups[suite]]
        p = suite_path(path, suite)
        p.write_text(render(rows, RECORD_COLUMNS, fmt, "comparison", config, suite=suite))
        written.append(p)
    return written


def suite_summary(records: Iterable[ComparisonRecord], suites: Sequence[str] = (),
                  tol_scale: float | None = None) -> dict:
    """``{suite: (records, flagged, violations)}``."""
    out = {s: [0, 0, 0] for s in suites}
    for rec in records:
        c = out.setdefault(rec.suite, [0, 0, 0])
        row = record_row(rec, tol_scale)
        c[0] += 1
        c[1] += bool(rec.flagged)
        c[2] += not row["passed"]
    return {k: tuple(v) for k, v in sorted(out.items())}


def summary_lines(summary: dict) -> list[str]:
    lines = []
    for suite, (n, flagged, bad) in summary.items():
        status = "PASS" if bad == 0 else "FAIL"
        lines.append(f"{status} {suite}: {n} records, {flagged} flagged, {bad} violations")
    return lines


__all__ = ["RECORD_COLUMNS", "PROBE_COLUMNS", "FORMATS", "fmt_float", "record_row", "render",
           "emit_report", "suite_path", "suite_summary", "summary_lines"]
