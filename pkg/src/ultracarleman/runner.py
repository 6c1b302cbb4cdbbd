"""Execute the suite items of a RunConfig and collect reports."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .carleman import (alpha_sweep, verify_global, verify_identities, verify_lemma1,
                       verify_lemma2, verify_local)
from .config import RunConfig
from .jerk import build_jerk_operator
from .linalg_core import c2_lower_bound, g_sup, kalman_matrix, numerical_rank
from .operator_model import OperatorSpec
from .pipeline import PipelineConfig, run_pipeline
from .report import make_report
from .spectral import FrequencyRegion, build_plan
from .testfuncs import adapted_slice, gen_test_function

LEMMA2_FRACTIONS = (0.25, 0.5, 1.0)
LEMMA2_BAND = 5.0


def regime_rho(spec: OperatorSpec, t2: float, b: float, target: float) -> np.ndarray:
    """A fixed direction scaled so that g_sup(rho) equals ``target`` (less 1e-9
    relative, so that the boundary case is not lost to roundoff)."""
    rho = np.ones(spec.n) / math.sqrt(spec.n)
    gs = g_sup(spec.drift, rho, t2, b).g_value
    if gs <= 0.0:
        return np.zeros(spec.n)
    return rho * math.sqrt(target * (1 - 1e-9) / gs)


def _slice_function(cfg: RunConfig, spec, grid, alpha, b, seed):
    fam = cfg.suite["family"]
    if fam == "adapted":
        a0 = float(np.mean(np.linalg.eigvalsh(spec.A(np.array(0.5 * grid.t2),
                                                     np.zeros(spec.m)))))
        return adapted_slice(grid, alpha, b, seed=seed, a_scale=a0)
    return gen_test_function(grid, fam, seed=seed)


def _lemma_function(cfg: RunConfig, grid, seed):
    fam = cfg.suite["family"]
    return gen_test_function(grid, "modulated-bump" if fam == "adapted" else fam, seed=seed)


class Runner:
    """Builds the objects shared by all suite items of one configuration."""

    def __init__(self, cfg: RunConfig, seed_base: int = 0):
        self.cfg = cfg
        self.spec = cfg.build_operator()
        self.seeds = [seed_base + i for i in range(cfg.suite["seeds"])]
        self.seed_base = seed_base

    def base_params(self, alpha=None, R=None):
        return self.cfg.params(alpha, R)

    # -- items ---------------------------------------------------------------
    def check_rank(self):
        d = self.spec.drift
        rr = numerical_rank(kalman_matrix(d))
        return [make_report("kalman_rank", rr.rank, d.n, d.n - rr.rank, 0.0,
                            suite="check-rank", params={"operator": self.spec.name},
                            details={"rank": rr.rank, "n": d.n,
                                     "singular_values": list(rr.singular_values)})]

    def constants(self):
        p = self.base_params()
        d = self.spec.drift
        prof = c2_lower_bound(d, p.t2)
        c2 = prof.c2_estimate or 0.0
        # only positivity is claimed; 1/c2 is recorded, not bounded
        out = [make_report("c2", c2, 0.0, 1.0 / c2 if c2 > 0 else math.inf, math.inf,
                           preconditions_ok=not prof.rank_deficient and c2 > 0,
                           suite="constants",
                           params={"operator": self.spec.name, "t2": p.t2},
                           details={"c2": c2, "rank_deficient": prof.rank_deficient})]
        if not prof.rank_deficient:
            rng = np.random.default_rng(self.seed_base)
            dirs = rng.standard_normal((1000, d.n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            for R in self.cfg.carleman["R"]:
                reg = FrequencyRegion(d, R, p.b, p.t2)
                rad = reg.bounding_radius
                if R == 0:
                    continue
                # along direction u the boundary of U_R sits at |rho| = sqrt(R / G(u))
                reach = float(np.max(np.sqrt(R / reg.sup_fn(dirs))))
                out.append(make_report("U_R_radius", reach, rad, reach / rad, 1.0 + 1e-9,
                                       suite="constants",
                                       params={"operator": self.spec.name, "R": R, "b": p.b},
                                       details={"radius": rad, "max_boundary_radius": reach}))
        return out

    def _rho(self, p):
        c = self.cfg.carleman
        return regime_rho(self.spec, p.t2, p.b, c["rho_fraction"] * p.eps0 * p.alpha0)

    def local(self):
        grid = self.cfg.build_slice_grid()
        p = self.base_params()
        rho = self._rho(p)
        out = []
        for s in self.seeds:
            h = _slice_function(self.cfg, self.spec, grid, p.alpha, p.b, s)
            out.append(verify_local(self.spec, rho, p, h, ceiling=self.cfg.ceilings["local"],
                                    seed=s))
        return out

    def sweep(self):
        grid = self.cfg.build_slice_grid()
        p = self.base_params()
        rho = self._rho(p)
        res = alpha_sweep(self.spec, rho, p, self.cfg.carleman["alphas"], self.seeds,
                          mode="local", grid=grid, family=self.cfg.suite["family"],
                          trend_ceiling=self.cfg.ceilings["trend"],
                          ceiling=self.cfg.ceilings["local"])
        for r in res.reports:
            r.suite = "sweep"
        trend = make_report("alpha_trend", max(res.per_alpha.values(), default=math.nan),
                            min(res.per_alpha.values(), default=math.nan), res.trend,
                            self.cfg.ceilings["trend"],
                            preconditions_ok=res.status != "out-of-regime",
                            status=None if res.status != "out-of-regime" else "out-of-regime",
                            suite="sweep", params={"operator": self.spec.name},
                            details=res.summary())
        return res.reports + [trend]

    def global_(self):
        grid = self.cfg.build_grid()
        out = []
        for R in self.cfg.carleman["R"]:
            p0 = self.base_params(R=R)
            plan = build_plan(grid, self.spec.drift, R, p0.b, p0.t2)
            for a in self.cfg.carleman["alphas"]:
                p = p0.with_alpha(a)
                for s in self.seeds:
                    g = gen_test_function(grid, "bump-product", seed=s, with_w=True)
                    rep = verify_global(self.spec, p, g, plan,
                                        ceiling=self.cfg.ceilings["global"], seed=s)
                    rep.params["R"] = R
                    out.append(rep)
        return out

    def lemma1(self):
        grid = self.cfg.build_slice_grid()
        out = []
        for a in self.cfg.carleman["alphas"]:
            p = self.base_params(alpha=a)
            for s in self.seeds:
                h = _lemma_function(self.cfg, grid, s)
                out.append(verify_lemma1(self.spec, p, h,
                                         floor=self.cfg.ceilings["lemma1_floor"], seed=s))
        return out

    def lemma2(self):
        grid = self.cfg.build_slice_grid()
        eps = self.cfg.carleman["lemma2_eps"]
        out = []
        for a in self.cfg.carleman["alphas"]:
            p = self.base_params(alpha=a)
            for s in self.seeds:
                h = _lemma_function(self.cfg, grid, s)
                Cs, reps = [], []
                for f in LEMMA2_FRACTIONS:
                    rho = regime_rho(self.spec, p.t2, p.b, f * p.eps0 * p.alpha)
                    r = verify_lemma2(self.spec, rho, p, h, eps=eps, seed=s)
                    r.name = f"lemma2[f={f:g}]"
                    r.details["fraction"] = f
                    reps.append(r)
                    Cs.append(r.empirical_constant)
                out.extend(reps)
                if all(r.status in ("pass", "fail") for r in reps):
                    band = 1.0 if max(Cs) == 0 else (max(Cs) / min(Cs) if min(Cs) > 0
                                                     else math.inf)
                    out.append(make_report("lemma2_band", max(Cs), min(Cs), band, LEMMA2_BAND,
                                           suite="lemma2", alpha=a, seed=s,
                                           params={"operator": self.spec.name, "eps": eps},
                                           details={"C_eps": Cs,
                                                    "fractions": list(LEMMA2_FRACTIONS)}))
        return out

    def identities(self):
        grid = self.cfg.build_slice_grid()
        out = []
        for a in self.cfg.carleman["alphas"]:
            p = self.base_params(alpha=a)
            rho = self._rho(p)
            for s in self.seeds:
                h = _lemma_function(self.cfg, grid, s)
                out.append(verify_identities(self.spec, rho, p, h, seed=s))
        return out

    def pipeline(self):
        pc = self.cfg.pipeline
        if self.spec.name == "jerk":
            spec = build_jerk_operator(self.spec.A, self.spec.c, self.spec.d, lam=self.spec.lam)
        else:
            spec = build_jerk_operator(lam=self.spec.lam)
        c = self.cfg.carleman
        conf = PipelineConfig(T=pc["T"], nt=pc["nt"], nv=pc["nv"], Lv=pc["Lv"], nw=pc["nw"],
                              Lw=pc["Lw"], R=pc["R"], t1=pc["t1"], alphas=tuple(pc["alphas"]),
                              residual_threshold=pc["residual_threshold"],
                              chi_ceiling=self.cfg.ceilings["chi"], seed=self.seed_base,
                              contrast=pc["contrast"],
                              params={"eps0": c["eps0"], "alpha0": c["alpha0"],
                                      "Cstar": c["Cstar"], "c0": c["c0"]})
        res = run_pipeline(spec, conf)
        return res.reports

    ITEMS = {"check-rank": "check_rank", "constants": "constants", "local": "local",
             "sweep": "sweep", "global": "global_", "lemma1": "lemma1", "lemma2": "lemma2",
             "identities": "identities", "pipeline": "pipeline"}

    def run_item(self, item: str):
        t0 = time.perf_counter()
        reps = getattr(self, self.ITEMS[item])()
        dt = 1e3 * (time.perf_counter() - t0)
        for r in reps:
            if not r.runtime_ms:
                r.runtime_ms = dt / max(len(reps), 1)
        return reps


def run_suite(cfg: RunConfig, items=None, threads: int = 1, seed_base: int = 0):
    """Run the requested items (default: the config's suite) and return reports."""
    runner = Runner(cfg, seed_base)
    items = list(cfg.suite["items"] if items is None else items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(runner.run_item, items))
    else:
        chunks = [runner.run_item(i) for i in items]
    return [r for chunk in chunks for r in chunk]

