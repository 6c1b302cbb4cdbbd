"""YAML run configuration with located diagnostics.

Every key is declared in ``SCHEMA``; unknown keys, type mismatches and
invariant breaches raise ``ConfigError`` carrying the 1-based line and
column of the offending node.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .carleman import DEFAULTS, CarlemanParams
from .coefficients import Coefficient
from .errors import ConfigError, UltraCarlemanError
from .linalg_core import DriftPair
from .operator_model import GridSpec, OperatorSpec
from .presets import PRESETS, drift_preset

SUITE_ITEMS = ("check-rank", "constants", "local", "global", "lemma1", "lemma2",
               "identities", "sweep", "pipeline")
FORMATS = ("json", "csv")

# key -> (type tag, default); a trailing "?" allows null
SCHEMA = {
    "operator": {
        "preset": ("str?", "jerk"),
        "n": ("int", 3),
        "B1": ("matrix?", None),
        "B2": ("matrix?", None),
        "lambda": ("float", 1.1),
        "A": ("coef?", None),
        "c": ("coef?", None),
        "d": ("coef?", None),
    },
    "grid": {
        "t2": ("float", 0.04),
        "nt": ("int", 32),
        "nv": ("int", 32),
        "Lv": ("float", 0.5),
        "nw": ("int", 16),
        "Lw": ("float", 1.0),
        "slice_nt": ("int", 512),
        "slice_nv": ("int", 256),
    },
    "carleman": {
        "alphas": ("floats", [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]),
        "b": ("float?", None),
        "t1": ("float", 0.01),
        "t2": ("float?", None),
        "R": ("floats", [0.0]),
        "eps0": ("float", DEFAULTS["eps0"]),
        "alpha0": ("float", DEFAULTS["alpha0"]),
        "Cstar": ("float", DEFAULTS["Cstar"]),
        "c0": ("float", DEFAULTS["c0"]),
        "lemma2_eps": ("float", DEFAULTS["lemma2_eps"]),
        "rho_fraction": ("float", 0.5),
        "ceilings": ("ceilings", None),
    },
    "suite": {
        "items": ("strs", ["check-rank", "constants", "local", "lemma1", "lemma2",
                           "identities"]),
        "seeds": ("int", 5),
        "family": ("str", "adapted"),
    },
    "output": {
        "directory": ("str", "ultracarleman-out"),
        "formats": ("strs", ["json", "csv"]),
    },
    "pipeline": {
        "T": ("float", 0.04),
        "nt": ("int", 33),
        "nv": ("int", 48),
        "Lv": ("float", 2.0),
        "nw": ("int", 16),
        "Lw": ("float", 1.0),
        "R": ("float", 0.2),
        "t1": ("float", 0.01),
        "alphas": ("floats", [8.0, 16.0, 32.0, 64.0, 128.0, 256.0]),
        "residual_threshold": ("float", 1e-2),
        "contrast": ("bool", True),
    },
}

CEILING_KEYS = ("local", "global", "trend", "lemma1_floor", "chi")
CEILING_DEFAULTS = {"local": DEFAULTS["local_ceiling"], "global": DEFAULTS["global_ceiling"],
                    "trend": DEFAULTS["trend_ceiling"], "lemma1_floor": DEFAULTS["lemma1_floor"],
                    "chi": DEFAULTS["chi_ceiling"]}


def _where(node):
    if node is None:
        return None, None
    return node.start_mark.line + 1, node.start_mark.column + 1


def _err(msg, node):
    line, col = _where(node)
    return ConfigError(msg, line, col)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; each section is a plain dict of typed values."""

    operator: dict
    grid: dict
    carleman: dict
    suite: dict
    output: dict
    pipeline: dict

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in SCHEMA}

    def build_operator(self) -> OperatorSpec:
        return _build_operator(self.operator)

    def build_grid(self) -> GridSpec:
        g = self.grid
        spec = self.build_operator()
        return GridSpec(t2=g["t2"], nt=g["nt"], m=spec.m, nv=g["nv"], Lv=g["Lv"],
                        n=spec.n, nw=g["nw"], Lw=g["Lw"])

    def build_slice_grid(self) -> GridSpec:
        g = self.grid
        spec = self.build_operator()
        return GridSpec(t2=g["t2"], nt=g["slice_nt"], m=spec.m, nv=g["slice_nv"], Lv=g["Lv"])

    def params(self, alpha=None, R=None) -> CarlemanParams:
        c = self.carleman
        t2 = c["t2"] if c["t2"] is not None else self.grid["t2"]
        b = c["b"] if c["b"] is not None else t2
        return CarlemanParams(alpha=float(c["alphas"][0] if alpha is None else alpha), b=b,
                              t1=c["t1"], t2=t2, R=float(c["R"][0] if R is None else R),
                              eps0=c["eps0"], alpha0=c["alpha0"],
                              lam=self.operator["lambda"], c0=c["c0"], Cstar=c["Cstar"])

    @property
    def ceilings(self) -> dict:
        return dict(self.carleman["ceilings"])


def _scalar(loader, node, tag, path):
    val = loader.construct_object(node, deep=True)
    base = tag.rstrip("?")
    if tag.endswith("?") and val is None:
        return None
    try:
        if base == "float":
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            out = float(val)
            if not math.isfinite(out):
                raise ValueError
            return out
        if base == "int":
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
            return int(val)
        if base == "bool":
            if not isinstance(val, bool):
                raise TypeError
            return val
        if base == "str":
            if not isinstance(val, str):
                raise TypeError
            return val
        if base == "floats":
            if not isinstance(val, list) or not val:
                raise TypeError
            return [_scalar_value(v, float) for v in val]
        if base == "strs":
            if not isinstance(val, list):
                raise TypeError
            if not all(isinstance(v, str) for v in val):
                raise TypeError
            return list(val)
        if base == "matrix":
            arr = np.asarray(val, dtype=float)
            if arr.ndim != 2 or not np.all(np.isfinite(arr)):
                raise TypeError
            return arr.tolist()
        if base == "coef":
            if not isinstance(val, dict):
                raise TypeError
            return val
        if base == "ceilings":
            if val is None:
                return dict(CEILING_DEFAULTS)
            if not isinstance(val, dict):
                raise TypeError
            out = dict(CEILING_DEFAULTS)
            for k, v in val.items():
                if k not in CEILING_KEYS:
                    raise _err(f"unknown key {path}.{k}", node)
                out[k] = _scalar_value(v, float)
            return out
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise _err(f"{path}: expected {base}, got {val!r}", node) from None
    raise _err(f"{path}: unsupported type tag {tag}", node)


def _scalar_value(v, kind):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError
    out = kind(v)
    if not math.isfinite(out):
        raise ValueError
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML text into a RunConfig."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    loader = yaml.SafeLoader(text)
    try:
        root = loader.get_single_node()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None,
                          mark.column + 1 if mark else None) from None
    sections = {}
    nodes = {}
    if root is None:
        root_items = []
    elif not isinstance(root, yaml.MappingNode):
        raise _err("top level must be a mapping", root)
    else:
        root_items = root.value
    for knode, vnode in root_items:
        key = loader.construct_object(knode)
        if key not in SCHEMA:
            raise _err(f"unknown section {key!r}", knode)
        if key in nodes:
            raise _err(f"duplicate section {key!r}", knode)
        if not isinstance(vnode, yaml.MappingNode):
            if isinstance(vnode, yaml.ScalarNode) and vnode.value in ("", "~", "null"):
                nodes[key] = (knode, None)
                continue
            raise _err(f"section {key!r} must be a mapping", vnode)
        nodes[key] = (knode, vnode)
    where = {}
    for sec, fields in SCHEMA.items():
        vals = {k: copy.deepcopy(d) for k, (_, d) in fields.items()}
        if sec == "carleman":
            vals["ceilings"] = dict(CEILING_DEFAULTS)
        knode, vnode = nodes.get(sec, (None, None))
        where[sec] = (knode, {})
        if vnode is not None:
            seen = set()
            for fk, fv in vnode.value:
                key = loader.construct_object(fk)
                if key not in fields:
                    raise _err(f"unknown key {sec}.{key}", fk)
                if key in seen:
                    raise _err(f"duplicate key {sec}.{key}", fk)
                seen.add(key)
                vals[key] = _scalar(loader, fv, fields[key][0], f"{sec}.{key}")
                where[sec][1][key] = fv
        sections[sec] = vals
    cfg = RunConfig(**sections)
    _validate(cfg, where)
    return cfg


def _node_for(where, sec, key=None):
    knode, keys = where.get(sec, (None, {}))
    if key is not None and key in keys:
        return keys[key]
    return knode


def _validate(cfg: RunConfig, where):
    op = cfg.operator
    explicit = op["B1"] is not None or op["B2"] is not None
    if explicit and "preset" not in where["operator"][1]:
        # an explicit drift replaces the default preset
        op["preset"] = None
    if op["preset"] is not None and explicit:
        raise _err("operator: give either a preset or B1/B2, not both",
                   _node_for(where, "operator", "B1"))
    if op["preset"] is not None and op["preset"] not in PRESETS:
        raise _err(f"operator.preset: unknown preset {op['preset']!r}",
                   _node_for(where, "operator", "preset"))
    if op["preset"] is None and (op["B1"] is None or op["B2"] is None):
        raise _err("operator: B1 and B2 are required without a preset",
                   _node_for(where, "operator"))
    try:
        spec = _build_operator(op)
    except (UltraCarlemanError, TypeError, KeyError) as exc:
        raise _err(f"operator: {exc}", _node_for(where, "operator")) from None
    g = cfg.grid
    try:
        GridSpec(t2=g["t2"], nt=g["nt"], m=spec.m, nv=g["nv"], Lv=g["Lv"], n=spec.n,
                 nw=g["nw"], Lw=g["Lw"])
        GridSpec(t2=g["t2"], nt=g["slice_nt"], m=spec.m, nv=g["slice_nv"], Lv=g["Lv"])
    except UltraCarlemanError as exc:
        raise _err(f"grid: {exc}", _node_for(where, "grid")) from None
    c = cfg.carleman
    for key in ("alphas", "R"):
        for a in c[key]:
            if a < (1.0 if key == "alphas" else 0.0):
                raise _err(f"carleman.{key}: value {a} out of range",
                           _node_for(where, "carleman", key))
    try:
        for R in c["R"]:
            cfg.params(alpha=max(c["alphas"]), R=R)
    except UltraCarlemanError as exc:
        bad = "b" if "b <=" in str(exc) or "b=" in str(exc) else None
        raise _err(f"carleman: CarlemanParams invariant violated: {exc}",
                   _node_for(where, "carleman", bad)) from None
    if not 0 < c["lemma2_eps"] < 1:
        raise _err("carleman.lemma2_eps must lie in (0, 1)",
                   _node_for(where, "carleman", "lemma2_eps"))
    if not 0 < c["rho_fraction"] <= 1:
        raise _err("carleman.rho_fraction must lie in (0, 1]",
                   _node_for(where, "carleman", "rho_fraction"))
    for item in cfg.suite["items"]:
        if item not in SUITE_ITEMS:
            raise _err(f"suite.items: unknown item {item!r}", _node_for(where, "suite", "items"))
    if cfg.suite["seeds"] < 1:
        raise _err("suite.seeds must be >= 1", _node_for(where, "suite", "seeds"))
    if cfg.suite["family"] not in ("adapted", "bump-product", "modulated-bump",
                                   "random-band-limited"):
        raise _err(f"suite.family: unknown family {cfg.suite['family']!r}",
                   _node_for(where, "suite", "family"))
    for f in cfg.output["formats"]:
        if f not in FORMATS:
            raise _err(f"output.formats: unknown format {f!r}",
                       _node_for(where, "output", "formats"))
    p = cfg.pipeline
    try:
        GridSpec(t2=p["T"], nt=p["nt"], m=1, nv=p["nv"], Lv=p["Lv"], n=3, nw=p["nw"],
                 Lw=p["Lw"])
        CarlemanParams(alpha=max(p["alphas"]), b=p["T"], t1=p["t1"], t2=p["T"], R=p["R"])
    except UltraCarlemanError as exc:
        raise _err(f"pipeline: {exc}", _node_for(where, "pipeline")) from None


def _build_operator(op: dict) -> OperatorSpec:
    if op["preset"] is not None:
        d = drift_preset(op["preset"], op["n"])
        name = op["preset"]
    else:
        d = DriftPair(np.asarray(op["B1"]), np.asarray(op["B2"]))
        name = "custom"
    m = d.m
    A = Coefficient.from_dict("matrix", m, op["A"]) if op["A"] else \
        Coefficient("matrix", m, np.eye(m))
    c = Coefficient.from_dict("scalar", m, op["c"]) if op["c"] else None
    dd = Coefficient.from_dict("vector", m, op["d"]) if op["d"] else None
    return OperatorSpec(d, A, c, dd, lam=op["lambda"], name=name)


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)


def load_config(path: str) -> RunConfig:
    with open(path, "rb") as fh:
        return parse_config(fh.read().decode("utf-8"))


def default_config() -> RunConfig:
    return parse_config("{}")
