"""CSV/JSON serialization of coverage reports and result tables."""

from __future__ import annotations

import csv
import io
import json
import math

from .data import fmt
from .errors import ParseError

REPORT_FIELDS = ("scenario", "n", "method", "time", "coverage", "mc_se", "mean_width",
                 "elapsed_ms")
_FLOAT_FIELDS = ("coverage", "mc_se", "mean_width", "elapsed_ms")


def _sort_key(row):
    t = row["time"]
    tkey = (1, 0.0) if t == "band" else (0, float(t))
    return (str(row["scenario"]), int(row["n"]), str(row["method"]), tkey)


def sorted_rows(rows):
    return sorted(rows, key=_sort_key)


def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return fmt(x)


def emit_report(report, format="csv", timing=False) -> bytes:
    """Serialize a :class:`~competing_ate.coverage.CoverageReport`.

    Rows are stable-sorted by (scenario, n, method, time) with the band row
    last. ``elapsed_ms`` is written only when ``timing`` is set, so that
    repeated runs give byte-identical files.
    """
    rows = sorted_rows(getattr(report, "rows", report))
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for row in rows:
            t = row["time"]
            w.writerow([row["scenario"], int(row["n"]), row["method"],
                        t if t == "band" else fmt(t), _num(row["coverage"]),
                        _num(row["mc_se"]), _num(row["mean_width"]),
                        _num(row["elapsed_ms"]) if timing else ""])
        return buf.getvalue().encode("utf-8")
    if format == "json":
        out = []
        for row in rows:
            rec = {k: row[k] for k in REPORT_FIELDS}
            rec["n"] = int(rec["n"])
            for k in _FLOAT_FIELDS:
                v = rec[k]
                rec[k] = None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)
            if not timing:
                rec["elapsed_ms"] = None
            out.append(rec)
        return (json.dumps({"rows": out}, indent=1) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def read_report_csv(data: bytes):
    """Rows of a report CSV, with numbers parsed back to floats."""
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
        raise ParseError(f"unexpected report header {reader.fieldnames!r}")
    rows = []
    for i, rec in enumerate(reader, start=1):
        try:
            row = {"scenario": rec["scenario"], "n": int(rec["n"]), "method": rec["method"],
                   "time": "band" if rec["time"] == "band" else float(rec["time"])}
            for k in _FLOAT_FIELDS:
                row[k] = float(rec[k]) if rec[k] != "" else None
        except ValueError as exc:
            raise ParseError(f"row {i}: {exc}", row=i) from None
        rows.append(row)
    return rows


def read_report_json(data: bytes):
    return json.loads(data.decode("utf-8"))["rows"]


def table_csv(columns, records) -> bytes:
    """Generic CSV with floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in rec])
    return buf.getvalue().encode("utf-8")
