"""Deterministic JSON/CSV emission of verification reports.

Report bodies carry no timestamps or runtimes; those go to a separate
metadata file so that reruns with fixed seeds are byte-identical.  Floats
are written with 17 significant digits; non-finite values become null in
JSON and the literal ``nan``/``inf``/``-inf`` in CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from importlib import resources

import numpy as np

from .errors import ValidationError
from .report import VerificationReport

CSV_COLUMNS = ("suite", "name", "alpha", "seed", "status", "pass", "lhs", "rhs",
               "empirical_constant", "ceiling")


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Canonical JSON: sorted keys, 17-digit floats, null for non-finite."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, complex):
        return to_json([obj.real, obj.imag], indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v) if math.isfinite(v) else str(float(v))
    return str(v)


def sort_reports(reports):
    return sorted(reports, key=lambda r: r.sort_key)


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sort_reports(reports):
        d = r.to_dict()
        w.writerow([_csv_cell(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def reports_json(reports) -> str:
    return to_json([r.to_dict() for r in sort_reports(reports)]) + "\n"


def summarize(reports, strict: bool = False) -> dict:
    counts = {}
    for r in reports:
        counts[r.status] = counts.get(r.status, 0) + 1
    return {"counts": dict(sorted(counts.items())), "total": len(reports),
            "exit_code": exit_code(reports, strict)}


def exit_code(reports, strict: bool = False) -> int:
    """0 all checkable pass, 1 any fail, 3 nothing checkable."""
    failed = any(r.status == "fail" or (strict and r.status == "inconclusive")
                 for r in reports)
    if failed:
        return 1
    checkable = any(r.status in ("pass", "degenerate-pass") for r in reports)
    return 0 if checkable else 3


def atomic_write(path: str, data: str | bytes):
    """Write to a temporary sibling and rename into place."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(reports, out_dir: str, formats=("json", "csv"), metadata: dict | None = None,
                summary: dict | None = None, prefix: str = "reports") -> dict:
    """Write reports (and summary/metadata) under ``out_dir``; return paths."""
    reports = list(reports)
    if not reports:
        raise ValidationError("no reports to emit")
    paths = {}
    if "json" in formats:
        paths["json"] = os.path.join(out_dir, f"{prefix}.json")
        atomic_write(paths["json"], reports_json(reports))
    if "csv" in formats:
        paths["csv"] = os.path.join(out_dir, f"{prefix}.csv")
        atomic_write(paths["csv"], reports_csv(reports))
    paths["summary"] = os.path.join(out_dir, "summary.json")
    atomic_write(paths["summary"], to_json(summary or summarize(reports)) + "\n")
    meta = dict(metadata or {})
    meta["runtime_ms"] = {f"{r.suite}/{r.name}/{r.alpha}/{r.seed}": r.runtime_ms
                          for r in sort_reports(reports)}
    paths["metadata"] = os.path.join(out_dir, "metadata.json")
    atomic_write(paths["metadata"], json.dumps(meta, sort_keys=True, indent=2, default=str))
    return paths


def load_schema() -> dict:
    text = resources.files("ultracarleman").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)
