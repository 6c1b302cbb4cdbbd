"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

from __future__ import annotations

import filecmp
import math
import time

import numpy as np
import pytest
import yaml

from ultracarleman.carleman import CarlemanParams, identity_terms, verify_identities
from ultracarleman.cli import main
from ultracarleman.config import parse_config
from ultracarleman.jerk import (JerkState, build_jerk_operator, convergence_study,
                                diffusion_step)
from ultracarleman.linalg_core import (DriftPair, c2_lower_bound, g_sup_batch, kalman_matrix,
                                       numerical_rank)
from ultracarleman.operator_model import Field, GridSpec
from ultracarleman.pipeline import PipelineConfig, run_pipeline
from ultracarleman.presets import drift_preset, operator_preset, variable_diffusion
from ultracarleman.reports import reports_json
from ultracarleman.runner import regime_rho, run_suite
from ultracarleman.spectral import (apply_S_R, apply_T, build_plan, conjugation_discrepancy,
                                    invariance_check, physical_slice_norms, saturating_R)
from ultracarleman.testfuncs import gen_test_function

pytestmark = pytest.mark.slow

PRESETS3 = ("heat", "L1", "jerk")


def _config(preset: str, **sections):
    doc = {"operator": {"preset": preset}}
    doc.update(sections)
    return parse_config(yaml.safe_dump(doc))


def test_rank_reproduction(criterion):
    t0 = time.perf_counter()
    jr = numerical_rank(kalman_matrix(drift_preset("jerk"))).rank
    ex = {n: numerical_rank(kalman_matrix(drift_preset("example1", n))).rank
          for n in range(2, 9)}
    elapsed = time.perf_counter() - t0
    ok = jr == 3 and all(r == n for n, r in ex.items()) and elapsed < 1.0
    criterion(1, "Kalman rank", ok, f"jerk rank {jr}; example1 ranks {ex}", elapsed)
    assert jr == 3
    assert all(r == n for n, r in ex.items())
    assert elapsed < 1.0


def test_transform_laws(criterion):
    t0 = time.perf_counter()
    d = drift_preset("jerk")
    g = GridSpec(t2=0.04, nt=32, m=1, nv=64, Lv=0.5, n=3, nw=16, Lw=1.0)
    rng = np.random.default_rng(2024)
    worst_rt = worst_unit = 0.0
    for _ in range(200):
        vals = rng.standard_normal(g.full_shape) + 1j * rng.standard_normal(g.full_shape)
        u = Field(g, vals)
        Tu = apply_T(u, d)
        back = apply_T(Tu, d, "inverse").values
        worst_rt = max(worst_rt, np.linalg.norm(back - vals) / np.linalg.norm(vals))
        pn = physical_slice_norms(u)
        worst_unit = max(worst_unit, float(np.max(np.abs(Tu.slice_norms() - pn) / pn)))
    b = g.t2
    Rsat = saturating_R(g, d, b)
    plan = build_plan(g, d, 0.05 * Rsat, b)
    S1 = apply_S_R(u, plan)
    S2 = apply_S_R(S1, plan)
    idem = np.array_equal(S1.values, S2.values)
    nontrivial = 0.0 < plan.masks.mean() < 1.0
    full = apply_S_R(u, build_plan(g, d, Rsat, b)).values
    sat_err = float(np.max(np.abs(full - vals)) / np.max(np.abs(vals)))
    elapsed = time.perf_counter() - t0
    ok = (worst_rt <= 1e-10 and worst_unit <= 1e-10 and idem and nontrivial
          and sat_err <= 1e-12 and elapsed < 120)
    criterion(2, "transform laws", ok,
              f"roundtrip {worst_rt:.2e}, unitarity {worst_unit:.2e}, idempotent {idem}, "
              f"saturation {sat_err:.2e}", elapsed)
    assert worst_rt <= 1e-10 and worst_unit <= 1e-10
    assert idem and nontrivial
    assert sat_err <= 1e-12
    assert elapsed < 120


def test_invariant_frequency(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, n + 1))
        d = DriftPair(rng.standard_normal((n, m)), rng.standard_normal((n, n)))
        worst = max(worst, invariance_check(d, rng.standard_normal(n), 0.04).empirical_constant)
    bound = {}
    for name in ("L1", "jerk"):
        d = drift_preset(name)
        c2 = c2_lower_bound(d, 0.04).c2_estimate
        rho = rng.standard_normal((1000, d.n)) * rng.uniform(0.1, 10.0, (1000, 1))
        G = g_sup_batch(d, rho, 0.04, 0.0)
        bound[name] = (c2, float(np.min(G - c2 * np.sum(rho ** 2, axis=1))))
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1e-10 and all(c > 0 and m >= 0 for c, m in bound.values())
          and elapsed < 60)
    criterion(3, "invariant frequency", ok,
              f"max drift {worst:.2e}; c2 " +
              ", ".join(f"{k}={c:.3g} (min margin {m:.3g})" for k, (c, m) in bound.items()),
              elapsed)
    assert worst <= 1e-10
    for c2, margin in bound.values():
        assert c2 > 0 and margin >= 0
    assert elapsed < 60


def test_conjugation_identity(criterion):
    t0 = time.perf_counter()
    dw = 1.0 / 3.0
    out = {}
    for name in PRESETS3:
        spec = operator_preset(name)
        errs, nyq = [], []
        for N in (16, 32, 64):
            g = GridSpec(0.04, 24, spec.m, 24, 0.5, spec.n, N, N * dw / 2)
            u = gen_test_function(g, "gaussian-window", seed=1, with_w=True, sigma=0.667)
            res = conjugation_discrepancy(spec, u)
            errs.append(res["relative"])
            nyq.append(res["nyquist_fraction"])
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        out[name] = (errs, orders, max(nyq))
    elapsed = time.perf_counter() - t0

    def good(name):
        errs, orders, _ = out[name]
        # without w-transport the identity holds exactly, so only roundoff remains
        exact = max(errs) <= 1e-12
        return errs[-1] <= 1e-3 and (exact or min(orders) >= 2.0)

    ok = all(good(n) for n in PRESETS3) and elapsed < 600
    criterion(4, "conjugation identity", ok,
              "; ".join(f"{n}: errors {[f'{e:.2e}' for e in v[0]]} orders "
                        f"{[round(o, 2) for o in v[1]]}" for n, v in out.items()), elapsed)
    for name in PRESETS3:
        assert good(name), (name, out[name])
    assert elapsed < 600


def test_section_identities(criterion):
    t0 = time.perf_counter()
    summary = {}
    ok = True
    for name in PRESETS3:
        spec = operator_preset(name)
        p = CarlemanParams(alpha=8.0, b=0.04, t1=0.01, t2=0.04)
        rho = regime_rho(spec, p.t2, p.b, 0.5 * p.eps0 * p.alpha0)
        errs = []
        for N in (32, 64, 128):
            g = GridSpec(0.04, N, spec.m, N, 0.5)
            errs.append(identity_terms(spec, rho, p, gen_test_function(g, "modulated-bump",
                                                                        seed=3))["J1_rel"])
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        g = GridSpec(0.04, 512, spec.m, 256, 0.5)
        van, marg = 0.0, math.inf
        statuses = set()
        for s in range(50):
            r = verify_identities(spec, rho, p, gen_test_function(g, "modulated-bump", seed=s),
                                  seed=s)
            statuses.add(r.status)
            van = max(van, r.details["vanish_dt_rel"], r.details["vanish_pot_rel"])
            marg = min(marg, r.details["chaifen_margin_rel"])
        good = min(orders) >= 2.0 and van <= 1e-8 and marg >= -1e-6 and statuses == {"pass"}
        ok &= good
        summary[name] = (orders, van, marg)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    criterion(5, "identities", ok,
              "; ".join(f"{n}: J1 orders {[round(o, 2) for o in v[0]]}, vanishing {v[1]:.1e}, "
                        f"min margin {v[2]:.4e}" for n, v in summary.items()), elapsed)
    assert ok, summary


def test_carleman_trend(criterion):
    t0 = time.perf_counter()
    info = {}
    ok = True
    for name in PRESETS3:
        cfg = _config(name, suite={"items": ["sweep"], "seeds": 20})
        reps = run_suite(cfg)
        trend = [r for r in reps if r.name == "alpha_trend"][0]
        local = [r for r in reps if r.name != "alpha_trend"]
        alphas = sorted({r.alpha for r in local})
        finite = all(r.status == "pass" and math.isfinite(r.empirical_constant) for r in local)
        good = (trend.status == "pass" and trend.empirical_constant <= 10.0 and finite
                and alphas == [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0] and len(local) == 140)
        ok &= good
        info[name] = trend.empirical_constant
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1800
    criterion(6, "weighted estimate trend", ok,
              ", ".join(f"{n} max/min {v:.3f}" for n, v in info.items()), elapsed)
    assert ok, info


def test_lemma_suite(criterion):
    t0 = time.perf_counter()
    info = {}
    ok = True
    for name in PRESETS3:
        cfg = _config(name, suite={"items": ["lemma1", "lemma2"], "seeds": 5})
        reps = run_suite(cfg)
        l1 = [r for r in reps if r.name == "lemma1"]
        bands = [r for r in reps if r.name == "lemma2_band"]
        l2 = [r for r in reps if r.name.startswith("lemma2[")]
        c1 = min(r.details["c1"] for r in l1)
        worst_band = max(r.empirical_constant for r in bands)
        good = (c1 > 0 and all(r.status == "pass" for r in l1 + l2 + bands)
                and len(bands) == 35 and worst_band < 5.0)
        ok &= good
        info[name] = (c1, worst_band)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    criterion(7, "lemma suite", ok,
              "; ".join(f"{n}: min c1 {v[0]:.3g}, worst C_eps band {v[1]:.3f}"
                        for n, v in info.items()), elapsed)
    assert ok, info


def test_jerk_simulator(criterion):
    t0 = time.perf_counter()
    conv = convergence_study(build_jerk_operator())
    # diffusion only, c = d = 0: every step must shrink the L2 norm
    g = GridSpec(t2=0.04, nt=16, m=1, nv=64, Lv=1.0, n=3, nw=8, Lw=1.0)
    rng = np.random.default_rng(5)
    mono = True
    for spec in (build_jerk_operator(), build_jerk_operator(variable_diffusion(1, amp=0.05))):
        st = JerkState(g, rng.standard_normal((g.nv,) + (g.nw,) * 3))
        prev = np.linalg.norm(st.values)
        for k in range(64):
            st = diffusion_step(st, spec, 0.04 - (k + 0.5) * 0.04 / 64, 0.04 / 64)
            cur = np.linalg.norm(st.values)
            mono &= cur <= prev
            prev = cur
    elapsed = time.perf_counter() - t0
    ok = min(conv["orders"]) >= 1.9 and mono and elapsed < 300
    criterion(8, "jerk simulator", ok,
              f"errors {[f'{e:.2e}' for e in conv['errors']]}, orders "
              f"{[round(o, 2) for o in conv['orders']]}, monotone {mono}", elapsed)
    assert min(conv["orders"]) >= 1.9
    assert mono
    assert elapsed < 300


def test_pipeline(criterion):
    t0 = time.perf_counter()
    res = run_pipeline(build_jerk_operator(), PipelineConfig())
    zero = [r for r in res.reports if r.name == "solution_decay[u0-zero]"]
    contrast = [r for r in res.reports if r.name == "solution_decay[u0-nonzero]"]
    alphas = [r.alpha for r in zero]
    lefts = [r.details["left"] for r in zero]
    bounds = [r.details["implied_bound_factor"] for r in zero]
    ceiling_ok = all(r.empirical_constant <= r.ceiling for r in zero)
    ok_zero = (all(r.status in ("pass", "degenerate-pass") for r in zero)
               and all(r.details["residual"]["relative"] <= 1e-2 for r in zero)
               and ceiling_ok and alphas == sorted(alphas)
               and all(b <= a for a, b in zip(lefts, lefts[1:]))
               and all(b <= a for a, b in zip(bounds, bounds[1:])))
    # with u(0) != 0 the left side stays put while the implied bound decays like
    # 1/alpha, so the inequality must eventually break
    c_left = [r.details["left"] for r in contrast]
    c_bound = [r.details["implied_bound_factor"] for r in contrast]
    ok_contrast = (len(contrast) == len(zero) and
                   all(r.status == "hypothesis-violated" and not r.passed for r in contrast)
                   and contrast[0].details["residual"]["relative"] <= 1e-2
                   and min(c_left) > 0 and max(c_left) == min(c_left)
                   and all(b < a for a, b in zip(c_bound, c_bound[1:]))
                   and contrast[-1].empirical_constant > contrast[-1].ceiling)
    elapsed = time.perf_counter() - t0
    ok = ok_zero and ok_contrast and elapsed < 1200
    criterion(9, "pipeline decay check", ok,
              f"u0=0 statuses {sorted({r.status for r in zero})}; contrast statuses "
              f"{sorted({r.status for r in contrast})}, residual "
              f"{contrast[0].details['residual']['relative']:.2e}", elapsed)
    assert ok_zero and ok_contrast
    assert elapsed < 1200


def test_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({"operator": {"preset": "jerk"},
                                   "suite": {"items": ["pipeline"]}}))
    codes = []
    for tag in ("a", "b"):
        codes.append(main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / tag)]))
    same = all(filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)
               for f in ("reports.json", "reports.csv", "summary.json"))
    api = [reports_json(run_pipeline(build_jerk_operator(), PipelineConfig()).reports)
           for _ in range(2)]
    elapsed = time.perf_counter() - t0
    ok = same and api[0] == api[1] and codes == [0, 0]
    criterion(10, "determinism", ok, f"CLI bodies identical {same}, API bodies identical "
              f"{api[0] == api[1]}, exit codes {codes}", elapsed)
    assert codes == [0, 0]
    assert same and api[0] == api[1]
