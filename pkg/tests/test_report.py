import json
import xml.etree.ElementTree as ET

import pytest

from competing_ate.errors import ParseError
from competing_ate.report import (REPORT_FIELDS, emit_report, read_report_csv,
                                  read_report_json, table_csv)
from competing_ate.svg import ate_chart, coverage_charts

ROWS = [
    {"scenario": "default", "n": 100, "method": "IF", "time": "band", "coverage": 0.9,
     "mc_se": 0.03, "mean_width": 0.2, "elapsed_ms": 12.5},
    {"scenario": "default", "n": 100, "method": "IF", "time": 5.0, "coverage": 0.95,
     "mc_se": 0.0218, "mean_width": 1 / 3, "elapsed_ms": 12.5},
    {"scenario": "default", "n": 50, "method": "EBS", "time": 1.0, "coverage": 1.0,
     "mc_se": 0.0, "mean_width": 0.1, "elapsed_ms": 40.0},
    {"scenario": "default", "n": 100, "method": "IF", "time": 1.0, "coverage": 0.93,
     "mc_se": 0.025, "mean_width": 0.15, "elapsed_ms": 12.5},
]


def test_csv_round_trip_exact():
    back = read_report_csv(emit_report(ROWS, "csv", timing=True))
    assert [r["n"] for r in back] == [50, 100, 100, 100]
    assert [r["time"] for r in back] == [1.0, 1.0, 5.0, "band"]
    assert back[2]["mean_width"] == 1 / 3


def test_timing_blank_by_default():
    back = read_report_csv(emit_report(ROWS, "csv"))
    assert all(r["elapsed_ms"] is None for r in back)
    js = read_report_json(emit_report(ROWS, "json"))
    assert all(r["elapsed_ms"] is None for r in js)
    js = read_report_json(emit_report(ROWS, "json", timing=True))
    assert js[0]["elapsed_ms"] == 40.0


def test_header_only_report():
    data = emit_report([], "csv")
    assert data.decode().strip() == ",".join(REPORT_FIELDS)
    assert read_report_csv(data) == []
    assert json.loads(emit_report([], "json")) == {"rows": []}


def test_bad_header_and_format():
    with pytest.raises(ParseError):
        read_report_csv(b"a,b\n1,2\n")
    with pytest.raises(ValueError):
        emit_report(ROWS, "xml")


def test_table_csv_precision():
    data = table_csv(["x"], [[0.1 + 0.2]]).decode().splitlines()
    assert float(data[1]) == 0.1 + 0.2


def test_svg_documents_parse():
    docs = coverage_charts(ROWS, 0.95)
    assert set(docs) == {"default_coverage", "default_width", "default_time"}
    for doc in docs.values():
        root = ET.fromstring(doc.encode("utf-8"))
        assert root.tag.endswith("svg")
    ET.fromstring(ate_chart([0.0, 1.0, 2.0], [0.0, 0.1, 0.2], [-0.1, 0.0, 0.1],
                            [0.1, 0.2, 0.3]).encode("utf-8"))


def test_svg_without_timing():
    rows = [dict(r, elapsed_ms=None) for r in ROWS]
    assert "default_time" not in coverage_charts(rows)
