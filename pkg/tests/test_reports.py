from __future__ import annotations

import json
import math

import jsonschema
import pytest

from ultracarleman.errors import ValidationError
from ultracarleman.report import VerificationReport, make_report
from ultracarleman.reports import (CSV_COLUMNS, emit_report, exit_code, load_schema,
                                   reports_csv, reports_json, summarize, to_json)


def _rep(status="pass", alpha=8.0, seed=0, name="local", constant=1.5):
    if status == "fail":
        constant = 1e3
    return make_report(name, 2.0, 1.0, constant, 100.0, suite="local", alpha=alpha, seed=seed,
                       status=None if status in ("pass", "fail") else status)


def test_make_report_derives_status():
    assert _rep().passed and _rep().status == "pass"
    bad = make_report("x", 1.0, 0.0, math.inf, 100.0)
    assert bad.status == "fail" and not bad.passed
    assert not make_report("x", 1, 1, 1, 100, preconditions_ok=False).passed
    assert not _rep("out-of-regime").passed
    assert _rep("degenerate-pass").passed
    with pytest.raises(ValueError):
        VerificationReport("x", 0, 0, 0, 1, True, "maybe")


def test_to_json_canonical():
    text = to_json({"b": math.inf, "a": [0.1, float("nan")], "c": True, "d": None})
    assert json.loads(text) == {"a": [0.1, None], "b": None, "c": True, "d": None}
    assert text.index('"a"') < text.index('"b"')
    assert to_json(1 / 3) == "0.33333333333333331"
    with pytest.raises(TypeError):
        to_json(object())


def test_reports_validate_against_schema():
    schema = load_schema()
    reps = [_rep(), _rep("out-of-regime", alpha=2.0), make_report("y", 1, 0, math.inf, 10)]
    jsonschema.validate(json.loads(reports_json(reps)), schema)


def test_csv_layout_and_order():
    reps = [_rep(alpha=16.0), _rep(alpha=4.0), _rep(alpha=8.0, seed=1)]
    rows = reports_csv(reps).strip().split("\n")
    assert rows[0] == ",".join(CSV_COLUMNS)
    assert [r.split(",")[2] for r in rows[1:]] == ["4", "8", "16"]


@pytest.mark.parametrize("statuses,strict,code", [
    (["pass", "pass"], False, 0),
    (["pass", "fail"], False, 1),
    (["pass", "inconclusive"], False, 0),
    (["pass", "inconclusive"], True, 1),
    (["out-of-regime", "inconclusive"], False, 3),
    (["degenerate-pass"], False, 0),
    (["hypothesis-violated"], False, 3),
])
def test_exit_codes(statuses, strict, code):
    reps = [_rep(s, seed=i) for i, s in enumerate(statuses)]
    assert exit_code(reps, strict) == code
    assert summarize(reps, strict)["exit_code"] == code


def test_emit_report_is_deterministic(tmp_path):
    reps = [_rep(seed=1), _rep(seed=0)]
    a = emit_report(reps, str(tmp_path / "a"), metadata={"k": 1})
    b = emit_report(list(reversed(reps)), str(tmp_path / "b"))
    for key in ("json", "csv", "summary"):
        assert open(a[key]).read() == open(b[key]).read()
    meta = json.load(open(a["metadata"]))
    assert meta["k"] == 1 and len(meta["runtime_ms"]) == 2
    with pytest.raises(ValidationError):
        emit_report([], str(tmp_path / "c"))
