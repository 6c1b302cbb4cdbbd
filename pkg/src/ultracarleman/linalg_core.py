"""Dense matrix utilities for the drift pair (B1, B2).

Matrix exponentials, the Kalman block matrix and its numerical rank, exact
drift characteristics, and the decay function

    G(rho) = max_t (t + b)^3 |B1^T exp(-t B2^T) rho|^2

together with its minimum over the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DimensionError, ValidationError

# exp(700) is still representable; beyond this we refuse rather than overflow
_EXP_ARG_LIMIT = 700.0
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DriftPair:
    """The constant drift ``(B1 v + B2 w) . grad_w``.

    ``B1`` is n x m (couples the diffusive variable v into w), ``B2`` is n x n.
    Arrays are copied and made read-only on construction.
    """

    B1: np.ndarray
    B2: np.ndarray

    def __post_init__(self):
        B1 = np.atleast_2d(np.asarray(self.B1, dtype=float))
        B2 = np.atleast_2d(np.asarray(self.B2, dtype=float))
        if B2.ndim != 2 or B2.shape[0] != B2.shape[1]:
            raise DimensionError(f"B2 must be square, got shape {B2.shape}")
        if B1.ndim != 2 or B1.shape[0] != B2.shape[0]:
            raise DimensionError(
                f"B1 must have {B2.shape[0]} rows, got shape {B1.shape}")
        if not (np.all(np.isfinite(B1)) and np.all(np.isfinite(B2))):
            raise ValidationError("drift matrices must be finite")
        object.__setattr__(self, "B1", _frozen(B1))
        object.__setattr__(self, "B2", _frozen(B2))

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def n(self) -> int:
        return self.B2.shape[0]

    @property
    def trace_B2(self) -> float:
        return float(np.trace(self.B2))

    @property
    def key(self):
        return (self.m, self.n, self.B1.tobytes(), self.B2.tobytes())

    def __eq__(self, other):
        return isinstance(other, DriftPair) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def to_dict(self) -> dict:
        return {"B1": self.B1.tolist(), "B2": self.B2.tolist()}


@dataclass(frozen=True)
class RankReport:
    kalman: np.ndarray
    singular_values: np.ndarray
    rank: int
    tol_used: float


@dataclass(frozen=True)
class DecayProfile:
    """Result of a sup/min computation of the decay function.

    ``samples`` is an (nt, 2) array of (t, value) pairs from the uniform scan.
    ``c2_estimate`` and ``rho_min`` are only set on sphere sweeps.
    """

    t2: float
    samples: np.ndarray
    g_value: float
    t_max: float
    c2_estimate: float | None = None
    rho_min: np.ndarray | None = None
    rank_deficient: bool = False
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# matrix exponential

def _check_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix has non-finite entries")
    return M


def _nilpotent_powers(M):
    """Return [I, M, M^2, ...] up to the last nonzero power, or None."""
    n = M.shape[0]
    powers = [np.eye(n)]
    P = np.eye(n)
    for _ in range(n):
        P = P @ M
        if not np.any(P):
            return powers
        powers.append(P)
    return None


@lru_cache(maxsize=256)
def _powers_cached(key):
    n, raw = key
    M = np.frombuffer(raw, dtype=float).reshape(n, n)
    return _nilpotent_powers(M)


def _powers(M):
    return _powers_cached((M.shape[0], np.ascontiguousarray(M).tobytes()))


def mat_exp(M, s: float = 1.0) -> np.ndarray:
    """Return ``exp(s M)``.

    Nilpotent inputs (detected by ``M^n == 0`` exactly) use the finite power
    series, which is exact up to rounding.  Everything else goes through
    scaling and squaring with a Pade approximant (``scipy.linalg.expm``).
    Raises ``ValidationError`` when ``|s| * ||M||_1`` exceeds 700.
    """
    M = _check_square(M)
    s = float(s)
    if not math.isfinite(s):
        raise ValidationError("scale s must be finite")
    if abs(s) * np.linalg.norm(M, 1) > _EXP_ARG_LIMIT:
        raise ValidationError("|s|*||M|| too large; exp(sM) would overflow")
    powers = _powers(M)
    if powers is not None:
        out = np.zeros_like(M)
        coef = 1.0
        for k, P in enumerate(powers):
            if k:
                coef *= s / k
            out += coef * P
        return out
    return scipy.linalg.expm(s * M)


def exp_stack(M, s) -> np.ndarray:
    """Vectorized ``exp(s_k M)`` for an array of scalars; shape (len(s), n, n)."""
    M = _check_square(M)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.size and np.max(np.abs(s)) * np.linalg.norm(M, 1) > _EXP_ARG_LIMIT:
        raise ValidationError("|s|*||M|| too large; exp(sM) would overflow")
    powers = _powers(M)
    if powers is not None:
        out = np.zeros((s.size,) + M.shape)
        coef = np.ones_like(s)
        for k, P in enumerate(powers):
            if k:
                coef = coef * s / k
            out += coef[:, None, None] * P
        return out
    return scipy.linalg.expm(s[:, None, None] * M[None, :, :])


# ---------------------------------------------------------------------------
# rank condition

def kalman_matrix(d: DriftPair) -> np.ndarray:
    """Block matrix ``[B1, B2 B1, ..., B2^{n-1} B1]`` (n x n*m)."""
    blocks = [d.B1]
    for _ in range(d.n - 1):
        blocks.append(d.B2 @ blocks[-1])
    return np.hstack(blocks)


def numerical_rank(M, tol_rel: float = 1e-10) -> RankReport:
    """Rank by singular-value thresholding at ``tol_rel * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValidationError("empty matrix")
    if not 0.0 < tol_rel < 1.0:
        raise ValidationError("tol_rel must lie in (0, 1)")
    sv = np.linalg.svd(M, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.count_nonzero(sv > tol_rel * smax)) if smax > 0 else 0
    return RankReport(kalman=M, singular_values=sv, rank=rank, tol_used=tol_rel)


def rank_condition_holds(d: DriftPair, tol_rel: float = 1e-10) -> bool:
    return numerical_rank(kalman_matrix(d), tol_rel).rank == d.n


# ---------------------------------------------------------------------------
# exact characteristics

def flow_map(d: DriftPair, dt: float):
    """Return ``(E, F)`` with ``w(dt) = E w0 + F v`` for ``w' = B1 v + B2 w``."""
    n, m = d.n, d.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = d.B2
    aug[:n, n:] = d.B1
    X = mat_exp(aug, dt)
    return X[:n, :n].copy(), X[:n, n:].copy()


def drift_flow(d: DriftPair, v, w0, dt: float) -> np.ndarray:
    """Exact solution at ``dt`` of ``w' = B1 v + B2 w``, ``w(0) = w0``, v frozen.

    Uses the exponential of the augmented matrix ``[[B2, B1 v], [0, 0]]``.
    """
    v = np.asarray(v, dtype=float).reshape(d.m)
    w0 = np.asarray(w0, dtype=float).reshape(d.n)
    aug = np.zeros((d.n + 1, d.n + 1))
    aug[:d.n, :d.n] = d.B2
    aug[:d.n, d.n] = d.B1 @ v
    X = mat_exp(aug, dt)
    return X[:d.n, :d.n] @ w0 + X[:d.n, d.n]


def rho_from_eta(d: DriftPair, t: float, eta):
    """Invariant frequency ``exp(t B2^T) eta`` (works on (..., n) arrays)."""
    E = mat_exp(d.B2.T, t)
    return np.asarray(eta, dtype=float) @ E.T


def eta_from_rho(d: DriftPair, t: float, rho):
    E = mat_exp(d.B2.T, -t)
    return np.asarray(rho, dtype=float) @ E.T


# ---------------------------------------------------------------------------
# decay function

class _DecayKernel:
    """Precomputed scan of ``t -> (t+b)^3 |B1^T exp(-t B2^T) rho|^2``."""

    def __init__(self, d: DriftPair, t_hi: float, b: float, nt: int):
        self.d = d
        self.b = float(b)
        self.t = np.linspace(0.0, t_hi, nt)
        self.weight = (self.t + self.b) ** 3
        E = exp_stack(-d.B2.T, self.t)                     # (nt, n, n)
        C = np.einsum("jm,kjn->kmn", d.B1, E)              # B1^T exp(-t B2^T)
        self.C = C.reshape(nt * d.m, d.n)

    def f_at(self, t, rhos):
        """Objective at per-row times ``t`` (P,) for ``rhos`` (P, n)."""
        E = exp_stack(-self.d.B2.T, t)
        y = np.einsum("jm,pjn,pn->pm", self.d.B1, E, rhos)
        return (t + self.b) ** 3 * np.sum(y * y, axis=1)

    def scan(self, rhos):
        y = rhos @ self.C.T
        y = y.reshape(rhos.shape[0], self.t.size, self.d.m)
        return self.weight * np.sum(y * y, axis=2)

    def sup(self, rhos, refine_iters: int = 40, chunk: int = 4096):
        """Return (values, argmax times) for a batch of rho, shape (P, n)."""
        rhos = np.atleast_2d(np.asarray(rhos, dtype=float))
        P = rhos.shape[0]
        vals = np.empty(P)
        targ = np.empty(P)
        nt = self.t.size
        for lo in range(0, P, chunk):
            r = rhos[lo:lo + chunk]
            s = self.scan(r)
            i = np.argmax(s, axis=1)
            best = s[np.arange(r.shape[0]), i]
            tbest = self.t[i]
            a = self.t[np.maximum(i - 1, 0)]
            z = self.t[np.minimum(i + 1, nt - 1)]
            c = z - _GOLDEN * (z - a)
            e = a + _GOLDEN * (z - a)
            fc = self.f_at(c, r)
            fe = self.f_at(e, r)
            for _ in range(refine_iters):
                left = fc > fe
                z = np.where(left, e, z)
                a = np.where(left, a, c)
                probe = np.where(left, z - _GOLDEN * (z - a), a + _GOLDEN * (z - a))
                fp = self.f_at(probe, r)
                c, fc, e, fe = (np.where(left, probe, e), np.where(left, fp, fe),
                                np.where(left, c, probe), np.where(left, fc, fp))
            for tt, ff in ((c, fc), (e, fe)):
                better = ff > best
                best = np.where(better, ff, best)
                tbest = np.where(better, tt, tbest)
            vals[lo:lo + chunk] = best
            targ[lo:lo + chunk] = tbest
        return vals, targ


@lru_cache(maxsize=64)
def _kernel(d: DriftPair, t_hi: float, b: float, nt: int) -> _DecayKernel:
    return _DecayKernel(d, t_hi, b, nt)


def _interval(t2, b):
    # b == 0 is the unshifted G, maximized over [0, t2/2]
    return t2 / 2.0 if b == 0 else t2


def g_sup_batch(d: DriftPair, rhos, t2: float, b: float = 0.0,
                nt: int = 1024, refine_iters: int = 40):
    """Vectorized sup of the decay function for rows of ``rhos``; see g_sup."""
    if not t2 > 0:
        raise ValidationError("t2 must be positive")
    if not 0 <= b <= t2:
        raise ValidationError("need 0 <= b <= t2")
    if nt < 64:
        raise ValidationError("nt must be at least 64")
    rhos = np.asarray(rhos, dtype=float).reshape(-1, d.n)
    vals, _ = _kernel(d, _interval(t2, b), float(b), int(nt)).sup(rhos, refine_iters)
    return vals


def g_sup(d: DriftPair, rho, t2: float, b: float = 0.0, nt: int = 1024,
          refine_iters: int = 40) -> DecayProfile:
    """Sup over t of ``(t+b)^3 |B1^T exp(-t B2^T) rho|^2``.

    With ``b > 0`` the sup runs over the closed interval [0, t2]; with
    ``b == 0`` this is the unshifted G(rho), maximized over [0, t2/2].
    Uniform scan at ``nt`` points, then golden-section refinement in the
    bracket around the best sample.
    """
    if not t2 > 0:
        raise ValidationError("t2 must be positive")
    if not 0 <= b <= t2:
        raise ValidationError("need 0 <= b <= t2")
    if nt < 64:
        raise ValidationError("nt must be at least 64")
    rho = np.asarray(rho, dtype=float).reshape(1, d.n)
    k = _kernel(d, _interval(t2, b), float(b), int(nt))
    vals, targ = k.sup(rho, refine_iters)
    samples = np.column_stack([k.t, k.scan(rho)[0]])
    return DecayProfile(t2=float(t2), samples=samples, g_value=float(vals[0]),
                        t_max=float(targ[0]))


def _sphere_points(n: int, count: int, seed: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = np.pi * (1.0 + 5.0 ** 0.5) * k
        r = np.sqrt(1.0 - z * z)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    x = np.random.default_rng(seed).standard_normal((count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def c2_lower_bound(d: DriftPair, t2: float, sphere_samples: int | None = None,
                   refine_iters: int = 400, seed: int = 0, starts: int = 8,
                   nt: int = 1024) -> DecayProfile:
    """Estimate ``c2 = min_{|rho|=1} G(rho)``.

    Quasi-uniform sphere sampling followed by Nelder-Mead polishing of the
    best ``starts`` samples (on ``x -> G(x)/|x|^2``, which is G on the sphere).
    The result is an upper estimate of the true minimum, not a certificate.
    A rank-deficient pair returns ``c2_estimate = 0`` with ``rank_deficient``.
    """
    n = d.n
    if sphere_samples is None:
        sphere_samples = max(100 * n, 2000)
    if sphere_samples < 100 * n:
        raise ValidationError("sphere_samples must be at least 100*n")
    kern = _kernel(d, _interval(t2, 0.0), 0.0, int(nt))
    if not rank_condition_holds(d):
        _, _, vt = np.linalg.svd(kalman_matrix(d).T)
        null = vt[-1]
        return DecayProfile(t2=float(t2), samples=np.empty((0, 2)), g_value=0.0,
                            t_max=0.0, c2_estimate=0.0, rho_min=null,
                            rank_deficient=True)

    pts = _sphere_points(n, sphere_samples, seed)
    vals, _ = kern.sup(pts)
    order = np.argsort(vals)
    best_val = float(vals[order[0]])
    best_rho = pts[order[0]].copy()

    def obj(x):
        nx = np.linalg.norm(x)
        if nx == 0:
            return np.inf
        v, _ = kern.sup((x / nx)[None, :])
        return float(v[0])

    for idx in order[:starts]:
        x0 = pts[idx]
        res = scipy.optimize.minimize(
            obj, x0, method="Nelder-Mead",
            options={"maxiter": refine_iters, "xatol": 1e-12, "fatol": 0.0,
                     "initial_simplex": x0 + 0.05 * np.vstack(
                         [np.zeros(n), np.eye(n)])})
        if res.fun < best_val:
            best_val = float(res.fun)
            best_rho = res.x / np.linalg.norm(res.x)
    prof = g_sup(d, best_rho, t2, 0.0, nt)
    return DecayProfile(t2=float(t2), samples=prof.samples, g_value=prof.g_value,
                        t_max=prof.t_max, c2_estimate=best_val, rho_min=best_rho)
