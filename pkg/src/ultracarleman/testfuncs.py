"""Smooth compactly supported test functions on structured grids."""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .operator_model import Field, GridSpec

KINDS = ("bump-product", "modulated-bump", "random-band-limited", "gaussian-window")
MIN_POINTS = 12
SUPPORT_FRACTION = 0.6


def bump(s):
    """Standard flat bump exp(-1/(1-s^2)) on |s| < 1, zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _axis_profile(x, lo, hi, rng, spacing, label):
    """Bump supported in a jittered sub-interval of [lo, hi]."""
    length = hi - lo
    half = length * rng.uniform(0.45, 0.5)
    center = 0.5 * (lo + hi) + rng.uniform(-1.0, 1.0) * (0.5 * length - half)
    if 2.0 * half / spacing < MIN_POINTS:
        raise ValidationError(
            f"grid too coarse on {label}: {2 * half / spacing:.1f} points across "
            f"the support (need {MIN_POINTS})")
    return bump((x - center) / half)


def _box(grid: GridSpec):
    f = SUPPORT_FRACTION
    t_lo = 0.5 * grid.t2 * (1.0 - f)
    t_hi = 0.5 * grid.t2 * (1.0 + f)
    return (t_lo, t_hi), (-f * grid.Lv, f * grid.Lv), (-f * grid.Lw, f * grid.Lw)


def _outer(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def gen_test_function(grid: GridSpec, kind: str = "bump-product", seed: int = 0,
                      with_w: bool = False, sigma: float | None = None) -> Field:
    """Deterministic smooth test function.

    The (t, v) part is a product of jittered bumps inside the middle 60% of
    each axis.  The w part depends on ``kind``:

    bump-product         bumps in w as well
    modulated-bump       a single lattice mode exp(i k . w) (seeded k)
    random-band-limited  random Fourier sum with Gaussian spectral taper
    gaussian-window      Gaussian of width ``sigma`` times mild cosine
                         modulations (localized in w and smooth in eta)

    Without ``with_w`` a time-v slice is returned; the kinds then differ in
    the v factor (modulation by exp(i k v) or a tapered random sum).
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown test-function kind {kind!r}")
    rng = np.random.default_rng(seed)
    (t_lo, t_hi), (v_lo, v_hi), (w_lo, w_hi) = _box(grid)
    ft = _axis_profile(grid.t, t_lo, t_hi, rng, grid.dt, "t")
    fv = [_axis_profile(grid.v_axis, v_lo, v_hi, rng, grid.dv, "v")
          for _ in range(grid.m)]
    amp = rng.uniform(0.5, 2.0)
    if not with_w:
        if kind == "modulated-bump":
            fv = [f * np.exp(1j * rng.integers(1, 6) * np.pi * grid.v_axis / grid.Lv)
                  for f in fv]
        elif kind == "random-band-limited":
            fv = [f * _tapered_sum(grid.v_axis, grid.Lv, rng) for f in fv]
        vals = amp * _outer([ft] + fv)
        return Field(grid.slice_grid(), vals, "slice")
    if not grid.has_w:
        raise ValidationError("with_w requested on a grid without w axis")
    w = grid.w_axis
    if kind == "bump-product":
        fw = [_axis_profile(w, w_lo, w_hi, rng, grid.dw, "w") for _ in range(grid.n)]
    elif kind == "modulated-bump":
        kmax = max(1, grid.nw // 8)
        fw = [np.exp(1j * np.pi * rng.integers(-kmax, kmax + 1) * w / grid.Lw)
              for _ in range(grid.n)]
    elif kind == "random-band-limited":
        fw = [_tapered_sum(w, grid.Lw, rng, kc=max(1.0, grid.nw / 8)) for _ in range(grid.n)]
    else:
        sig = grid.Lw / 4.0 if sigma is None else sigma
        fw = []
        for _ in range(grid.n):
            a1, a2 = rng.uniform(0.1, 0.3, 2)
            ph = rng.uniform(0, 2 * np.pi)
            fw.append(np.exp(-w ** 2 / (2 * sig ** 2))
                      * (1.0 + a1 * np.cos(w / sig + ph) + a2 * np.sin(0.5 * w / sig)))
    vals = amp * _outer([ft] + fv + fw)
    return Field(grid, vals, "physical")


def _tapered_sum(x, L, rng, kc: float = 3.0, kmax: int | None = None):
    """Random trigonometric sum with Gaussian taper exp(-(k/kc)^2)."""
    kmax = int(math.ceil(3 * kc)) if kmax is None else kmax
    ks = np.arange(-kmax, kmax + 1)
    coef = (rng.standard_normal(ks.size) + 1j * rng.standard_normal(ks.size))
    coef *= np.exp(-(ks / kc) ** 2)
    return np.exp(1j * np.pi * np.outer(x, ks) / L) @ coef


def adapted_slice(grid: GridSpec, alpha: float, b: float, seed: int = 0,
                  a_scale: float = 1.0, width_factor: float = 4.0) -> Field:
    """Near-extremal slice for the weighted estimate at parameter ``alpha``.

    Returns h = ((t+b)/b)^alpha F(t) psi(v) exp(i k v) where F is a bump of
    half-width ``width_factor (t0+b)/sqrt(alpha)`` around a seeded t0 and
    ``a_scale k^2 = alpha/(t0+b)``.  For such h the conjugated function
    nearly solves K2 g = 0 at t0, which is the regime where the weighted
    ratio is largest; the ratio then stays of order one as alpha grows.
    """
    if alpha < 1:
        raise ValidationError("alpha must be >= 1")
    rng = np.random.default_rng(seed)
    (t_lo, t_hi), (v_lo, v_hi), _ = _box(grid)
    t0 = rng.uniform(0.4, 0.6) * grid.t2
    half = min(width_factor * (t0 + b) / math.sqrt(alpha),
               t0 - t_lo, t_hi - t0)
    if 2 * half / grid.dt < MIN_POINTS:
        raise ValidationError(
            f"grid too coarse in t for alpha={alpha}: {2 * half / grid.dt:.1f} points")
    k = math.sqrt(alpha / ((t0 + b) * a_scale * grid.m)) * rng.uniform(0.9, 1.1)
    if k * grid.dv > 0.5:
        raise ValidationError(
            f"grid too coarse in v for alpha={alpha}: k*dv = {k * grid.dv:.2f}")
    F = bump((grid.t - t0) / half)
    logw = alpha * np.log((grid.t + b) / b)
    F = F * np.exp(logw)
    fv = []
    for _ in range(grid.m):
        hv = rng.uniform(0.8, 1.0) * v_hi
        fv.append(bump(grid.v_axis / hv)
                  * np.exp(1j * (k * grid.v_axis + rng.uniform(0, 2 * np.pi))))
    vals = _outer([F] + fv)
    return Field(grid.slice_grid(), vals, "slice")
