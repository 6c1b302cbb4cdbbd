"""Command-line front end.

Exit codes: 0 every checkable report passed, 1 at least one failure (or an
inconclusive report under ``--strict``), 2 usage or configuration error,
3 nothing checkable (all reports out of regime or otherwise gated).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import platform
import sys

import numpy as np

from . import __version__
from .config import FORMATS, RunConfig, default_config, load_config, serialize_config
from .errors import ConfigError, UltraCarlemanError
from .reports import emit_report, exit_code, summarize

log = logging.getLogger("ultracarleman")

VERIFY_KINDS = ("local", "global", "lemma1", "lemma2", "identities")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="YAML run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, metavar="N",
                   help="run independent suite items in N threads")
    p.add_argument("--seed-base", type=int, default=0, metavar="K",
                   help="first seed; suites use K, K+1, ...")
    p.add_argument("--strict", action="store_true", help="treat inconclusive as failure")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ultracarleman",
        description="Numerical verification harness for weighted estimates of "
                    "ultraparabolic operators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check-rank", help="Kalman rank of the configured drift")
    _common(p)
    p = sub.add_parser("constants", help="c2 estimate and U_R radii")
    _common(p)
    p = sub.add_parser("verify", help="run one verifier over the seed suite")
    p.add_argument("kind", choices=VERIFY_KINDS)
    _common(p)
    p = sub.add_parser("sweep", help="alpha sweep of the local estimate with trend check")
    _common(p)
    p = sub.add_parser("simulate-jerk", help="simulate the jerk model and export the trajectory")
    p.add_argument("--zero", action="store_true", help="start from zero error")
    _common(p)
    p = sub.add_parser("pipeline", help="simulate, reverse time and check the decay inequality")
    _common(p)
    p = sub.add_parser("run", help="run every suite item listed in the config")
    _common(p)
    return parser


def _load(args) -> RunConfig:
    return load_config(args.config) if args.config else default_config()


def _out_dir(args, cfg: RunConfig) -> str:
    return args.out or cfg.output["directory"]


def _metadata(args, cfg: RunConfig) -> dict:
    return {"command": args.command, "argv": sys.argv[1:], "version": __version__,
            "python": platform.python_version(), "numpy": np.__version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "threads": args.threads, "seed_base": args.seed_base,
            "config": cfg.to_dict()}


def _simulate(args, cfg: RunConfig) -> int:
    from .jerk import JerkState, SchemeConfig, build_jerk_operator, export_trajectory, simulate
    from .pipeline import PipelineConfig, initial_error

    pc = cfg.pipeline
    conf = PipelineConfig(T=pc["T"], nt=pc["nt"], nv=pc["nv"], Lv=pc["Lv"], nw=pc["nw"],
                          Lw=pc["Lw"])
    grid = conf.grid()
    spec = build_jerk_operator(lam=cfg.operator["lambda"])
    e0 = np.zeros((grid.nv,) + (grid.nw,) * 3) if args.zero else \
        initial_error(grid, args.seed_base)
    traj = simulate(JerkState(grid, e0), spec, SchemeConfig(dt=conf.T / 64), conf.T, nt=conf.nt)
    out = _out_dir(args, cfg)
    paths = export_trajectory(traj, os.path.join(out, "trajectory.bin"))
    print(f"wrote {paths[0]} and {paths[1]}; residual {traj.residual['relative']:.3e}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    from .runner import run_suite

    try:
        if args.command == "simulate-jerk":
            return _simulate(args, cfg)
        items = {"check-rank": ["check-rank"], "constants": ["constants"],
                 "sweep": ["sweep"], "pipeline": ["pipeline"],
                 "run": None}.get(args.command)
        if args.command == "verify":
            items = [args.kind]
        reports = run_suite(cfg, items, threads=args.threads, seed_base=args.seed_base)
    except UltraCarlemanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not reports:
        print("nothing to report", file=sys.stderr)
        return 3
    code = exit_code(reports, args.strict)
    out = _out_dir(args, cfg)
    summary = summarize(reports, args.strict)
    emit_report(reports, out, [f for f in cfg.output["formats"] if f in FORMATS],
                metadata=_metadata(args, cfg), summary=summary)
    for r in sorted(reports, key=lambda r: r.sort_key):
        log.info("%s %s alpha=%s seed=%s %s C=%.6g", r.suite, r.name, r.alpha, r.seed,
                 r.status, r.empirical_constant)
    print(f"{summary['total']} reports: " +
          ", ".join(f"{k}={v}" for k, v in summary["counts"].items()) +
          f"; exit {code}; written to {out}")
    if args.verbose:
        print(serialize_config(cfg))
    return code


if __name__ == "__main__":
    sys.exit(main())
