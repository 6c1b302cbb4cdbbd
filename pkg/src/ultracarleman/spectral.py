"""Fourier transform in w, the invariant frequency, the transform T, the
low-frequency region U_R and the projection S_R.

Conventions
-----------
The discrete transform is the unitary DFT over the periodic w-box with the
phase that accounts for the box offset::

    u_hat(eta_k) = N^{-n/2} sum_j exp(-i eta_k . w_j) u(w_j),   w_j = -Lw + j dw

so that ``u_hat`` samples the continuum transform (up to the constant
``(2 pi)^{-n/2} dw^n N^{n/2}``).  The lattice is ``eta = pi k / Lw`` with
integer ``k`` in numpy wraparound order (``np.fft.fftfreq``).

S_R is the time-dependent multiplier ``1_{U_R}(exp(t B2^T) eta)`` applied on
the eta-lattice; this equals ``T^-1 1_{U_R} T`` without resampling in rho.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.integrate

from .errors import StateError, ValidationError
from .linalg_core import (DriftPair, c2_lower_bound, exp_stack, g_sup_batch,
                          mat_exp, rank_condition_holds)
from .operator_model import (Field, GridSpec, MatrixField, OperatorSpec,
                             _check_grid, _drift_coeffs, centered_diff,
                             check_support, ddt_at, drift_term, lower_order,
                             time_stencil, time_weights)
from .report import VerificationReport, make_report

NYQUIST_TOL = 1e-6


# ---------------------------------------------------------------------------
# Fourier transform in w

def _phase(grid: GridSpec, ndim_lead: int):
    """Product of (-1)^k_j over w axes, shaped for arrays with ``ndim_lead``
    leading (v) axes."""
    sign = 1.0 - 2.0 * (grid.k_axis % 2)
    out = np.ones((1,) * ndim_lead + (grid.nw,) * grid.n)
    for j in range(grid.n):
        shape = [1] * (ndim_lead + grid.n)
        shape[ndim_lead + j] = grid.nw
        out = out * sign.reshape(shape)
    return out


def fw_slice(X, grid: GridSpec, phase=None):
    """Forward unitary w-transform of one time slice (v axes first)."""
    axes = tuple(range(grid.m, grid.m + grid.n))
    phase = _phase(grid, grid.m) if phase is None else phase
    return scipy.fft.fftn(X, axes=axes, norm="ortho") * phase


def iw_slice(Xh, grid: GridSpec, phase=None):
    axes = tuple(range(grid.m, grid.m + grid.n))
    phase = _phase(grid, grid.m) if phase is None else phase
    return scipy.fft.ifftn(Xh * phase, axes=axes, norm="ortho")


def fourier_w(u: Field, direction: str = "forward") -> Field:
    """Unitary Fourier transform in the degenerate variable (per time slice)."""
    g = u.grid
    if direction == "forward":
        if u.space != "physical":
            raise StateError("forward transform needs a physical-space field")
        if u.spectrum is not None:
            return Field(g, u.spectrum, "frequency")
        ph = _phase(g, g.m)
        out = np.empty(g.full_shape, dtype=complex)
        for k in range(g.nt):
            out[k] = fw_slice(u.values[k], g, ph)
        return Field(g, out, "frequency")
    if direction == "inverse":
        if u.space != "frequency":
            raise StateError("inverse transform needs a frequency-space field")
        ph = _phase(g, g.m)
        out = np.empty(g.full_shape, dtype=complex)
        for k in range(g.nt):
            out[k] = iw_slice(u.values[k], g, ph)
        return Field(g, out, "physical")
    raise ValidationError(f"unknown direction {direction!r}")


def eta_lattice(grid: GridSpec) -> np.ndarray:
    """All lattice points as an array of shape (nw,)*n + (n,)."""
    axes = np.meshgrid(*([grid.eta_axis] * grid.n), indexing="ij")
    return np.stack(axes, axis=-1)


# ---------------------------------------------------------------------------
# invariant frequency

def rho_map(d: DriftPair, t: float, vec, direction: str = "to_rho") -> np.ndarray:
    """``exp(t B2^T) eta`` (to_rho) or ``exp(-t B2^T) rho`` (to_eta)."""
    if direction == "to_rho":
        E = mat_exp(d.B2.T, t)
    elif direction == "to_eta":
        E = mat_exp(d.B2.T, -t)
    else:
        raise ValidationError(f"unknown direction {direction!r}")
    return np.asarray(vec, dtype=float) @ E.T


def invariance_check(d: DriftPair, rho0, t2: float, nt: int = 64,
                     tol: float = 1e-10) -> VerificationReport:
    """Integrate ``eta' = -B2^T eta`` from ``rho0`` and measure how far
    ``exp(t B2^T) eta(t)`` drifts from ``rho0``.

    ``eta(t)`` comes from a high-order adaptive integrator (DOP853 at tight
    tolerances), independent of the matrix exponential.
    """
    if nt < 64:
        raise ValidationError("nt must be >= 64")
    rho0 = np.asarray(rho0, dtype=float).reshape(d.n)
    ts = np.linspace(0.0, t2, nt)
    if not np.any(d.B2):
        traj = np.repeat(rho0[None, :], nt, axis=0)
    else:
        sol = scipy.integrate.solve_ivp(
            lambda t, y: -d.B2.T @ y, (0.0, t2), rho0, method="DOP853",
            t_eval=ts, rtol=1e-13, atol=1e-15 * max(1.0, np.abs(rho0).max()))
        traj = sol.y.T
    E = exp_stack(d.B2.T, ts)
    rho_t = np.einsum("kij,kj->ki", E, traj)
    scale = max(np.linalg.norm(rho0), 1e-300)
    drift = float(np.max(np.linalg.norm(rho_t - rho0, axis=1)) / scale)
    return make_report("invariance", drift, tol, drift, tol, suite="invariance",
                       params={"rho0": rho0.tolist(), "t2": t2, "nt": nt,
                               **d.to_dict()})


# ---------------------------------------------------------------------------
# low-frequency region

@dataclass
class FrequencyRegion:
    """U_R = {rho : sup_{0<=t<=t2} (t+b)^3 |B1^T exp(-t B2^T) rho|^2 <= R}."""

    drift: DriftPair
    R: float
    b: float
    t2: float
    nt: int = 1024
    _c2: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.R >= 0:
            raise ValidationError("R must be nonnegative")
        if not 0 < self.b <= self.t2:
            raise ValidationError("need 0 < b <= t2")

    def sup_fn(self, rhos) -> np.ndarray:
        return g_sup_batch(self.drift, rhos, self.t2, self.b, self.nt)

    @property
    def c2(self) -> float:
        if self._c2 is None:
            self._c2 = float(c2_lower_bound(self.drift, self.t2).c2_estimate)
        return self._c2

    @property
    def bounding_radius(self) -> float:
        return math.sqrt(self.R / self.c2) if self.c2 > 0 else math.inf


def region_membership(region: FrequencyRegion, rho):
    """(member, margin) with ``margin = R - sup_fn(rho)``; vectorized over rows."""
    rho = np.asarray(rho, dtype=float)
    single = rho.ndim == 1
    margin = region.R - region.sup_fn(rho.reshape(-1, region.drift.n))
    if single:
        return bool(margin[0] >= 0), float(margin[0])
    return margin >= 0, margin


# ---------------------------------------------------------------------------
# transform plan, T and S_R

@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Per-time masks ``1{exp(t B2^T) eta in U_R}`` on the eta-lattice.

    ``masks`` has shape (nt,) + (nw,)*n in wraparound order.
    """

    grid: GridSpec
    drift: DriftPair
    R: float
    b: float
    t2: float
    masks: np.ndarray

    @property
    def trB2(self) -> float:
        return self.drift.trace_B2

    @property
    def eta_grid(self) -> np.ndarray:
        return eta_lattice(self.grid)

    def mask_csv(self) -> str:
        """CSV dump: t_index, k_1..k_n (signed mode numbers), bit."""
        g = self.grid
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t_index"] + [f"k{j + 1}" for j in range(g.n)] + ["bit"])
        ks = np.stack(np.meshgrid(*([g.k_axis] * g.n), indexing="ij"),
                      axis=-1).reshape(-1, g.n)
        for t_idx in range(g.nt):
            bits = self.masks[t_idx].reshape(-1)
            for kk, bit in zip(ks, bits):
                wr.writerow([t_idx, *kk.tolist(), int(bit)])
        return buf.getvalue()


def build_plan(grid: GridSpec, drift: DriftPair, R: float, b: float,
               t2: float | None = None, nt_sup: int = 1024) -> TransformPlan:
    t2 = grid.t2 if t2 is None else t2
    region = FrequencyRegion(drift, R, b, t2, nt_sup)
    eta = eta_lattice(grid).reshape(-1, grid.n)
    masks = np.empty((grid.nt,) + (grid.nw,) * grid.n, dtype=bool)
    if not np.any(drift.B2):
        m0 = (region.sup_fn(eta) <= R).reshape((grid.nw,) * grid.n)
        masks[:] = m0
    else:
        E = exp_stack(drift.B2.T, grid.t)
        for k in range(grid.nt):
            rho = eta @ E[k].T
            masks[k] = (region.sup_fn(rho) <= R).reshape((grid.nw,) * grid.n)
    masks.setflags(write=False)
    return TransformPlan(grid, drift, float(R), float(b), float(t2), masks)


def saturating_R(grid: GridSpec, drift: DriftPair, b: float, t2=None,
                 factor: float = 1.0 + 1e-9) -> float:
    """Smallest R (times ``factor``) whose mask is all-ones on the lattice."""
    t2 = grid.t2 if t2 is None else t2
    eta = eta_lattice(grid).reshape(-1, grid.n)
    E = exp_stack(drift.B2.T, grid.t)
    top = 0.0
    for k in range(grid.nt if np.any(drift.B2) else 1):
        top = max(top, float(np.max(g_sup_batch(drift, eta @ E[k].T, t2, b))))
    return max(top, 1e-300) * factor


@dataclass(frozen=True, eq=False)
class TransformedField:
    """Output of T: lattice values ``exp(-t trB2/2) u_hat(eta)``, where lattice
    point eta carries the invariant frequency ``rho = exp(t B2^T) eta``.

    The relabeling has Jacobian ``exp(t trB2)``, which enters as the cell
    volume, so ``slice_norms`` equals the physical per-slice L2 norm.
    """

    grid: GridSpec
    drift: DriftPair
    values: np.ndarray

    def scale(self) -> np.ndarray:
        return np.exp(-0.5 * self.grid.t * self.drift.trace_B2)

    def rho_coords(self, k: int) -> np.ndarray:
        return rho_map(self.drift, self.grid.t[k], eta_lattice(self.grid))

    def slice_norms(self) -> np.ndarray:
        g = self.grid
        vol = g.dv ** g.m * g.dw ** g.n * np.exp(g.t * self.drift.trace_B2)
        ss = np.array([np.sum(np.abs(self.values[k]) ** 2) for k in range(g.nt)])
        return np.sqrt(ss * vol)


def physical_slice_norms(u: Field) -> np.ndarray:
    g = u.grid
    vol = g.dv ** g.m * (g.dw ** g.n if g.has_w else 1.0)
    return np.sqrt(np.array([np.sum(np.abs(u.values[k]) ** 2)
                             for k in range(g.nt)]) * vol)


def apply_T(u, plan_or_drift, direction: str = "forward"):
    """Forward: Field (physical) -> TransformedField.  Inverse: back."""
    drift = plan_or_drift.drift if isinstance(plan_or_drift, TransformPlan) else plan_or_drift
    if direction == "forward":
        if not isinstance(u, Field) or u.space != "physical":
            raise StateError("T expects a physical-space field")
        uh = fourier_w(u, "forward").values
        sc = np.exp(-0.5 * u.grid.t * drift.trace_B2)
        if drift.trace_B2 != 0.0:
            uh = uh * sc.reshape((-1,) + (1,) * (uh.ndim - 1))
        return TransformedField(u.grid, drift, uh)
    if direction == "inverse":
        if not isinstance(u, TransformedField):
            raise StateError("inverse T expects a TransformedField")
        vals = u.values
        if drift.trace_B2 != 0.0:
            sc = np.exp(0.5 * u.grid.t * drift.trace_B2)
            vals = vals * sc.reshape((-1,) + (1,) * (vals.ndim - 1))
        return fourier_w(Field(u.grid, vals, "frequency"), "inverse")
    raise ValidationError(f"unknown direction {direction!r}")


def apply_S_R(u: Field, plan: TransformPlan) -> Field:
    """Per slice: transform in w, keep the lattice points with
    ``exp(t B2^T) eta in U_R``, transform back.

    The masked spectrum is cached on the result, so a second application
    reuses it and is bit-identical to the first.
    """
    if u.space != "physical":
        raise StateError("S_R expects a physical-space field")
    g = u.grid
    if plan.grid != g:
        raise ValidationError("plan was built for a different grid")
    ph = _phase(g, g.m)
    spec_out = np.empty(g.full_shape, dtype=complex)
    out = np.empty(g.full_shape, dtype=complex)
    lead = (1,) * g.m
    for k in range(g.nt):
        uh = u.spectrum[k] if u.spectrum is not None else fw_slice(u.values[k], g, ph)
        mk = plan.masks[k].reshape(lead + plan.masks[k].shape)
        spec_out[k] = uh * mk
        out[k] = iw_slice(spec_out[k], g, ph)
    return Field(g, out, "physical", spectrum=spec_out)


# ---------------------------------------------------------------------------
# conjugation identity

def _eta_derivative(Xh, axis: int, grid: GridSpec):
    """4th-order lattice derivative d/d eta along ``axis`` (wraparound data).

    Works on the sorted lattice with one-sided closure at the edges.
    """
    d_eta = math.pi / grid.Lw
    S = np.fft.fftshift(Xh, axes=axis)
    S = np.moveaxis(S, axis, 0)
    N = S.shape[0]
    out = np.empty_like(S)
    out[2:-2] = (S[:-4] - 8.0 * S[1:-3] + 8.0 * S[3:-1] - S[4:]) / 12.0
    for k in (0, 1, N - 2, N - 1):
        offs, wts = time_stencil(k, N)
        out[k] = sum(wt * S[k + o] for o, wt in zip(offs, wts))
    out = np.moveaxis(out / d_eta, 0, axis)
    return np.fft.ifftshift(out, axes=axis)


class _SliceCache:
    """Rolling cache of transformed time slices (keeps memory bounded)."""

    def __init__(self, fn, keep: int = 6):
        self.fn = fn
        self.keep = keep
        self.store = {}

    def __call__(self, k):
        if k not in self.store:
            self.store[k] = self.fn(k)
            if len(self.store) > self.keep:
                del self.store[min(self.store)]
        return self.store[k]


def conjugation_discrepancy(spec: OperatorSpec, u: Field) -> dict:
    """Both sides of F_w(P u) = [d_t - (B2^T eta).grad_eta + i (B1^T eta).v
    + div_v(A grad_v) - tr B2] u_hat, slice by slice.

    Returns the relative L2 discrepancy, its per-term split and the
    Nyquist-shell mass fraction.
    """
    g = u.grid
    _check_grid(spec, g, need_w=True)
    if u.space != "physical":
        raise StateError("conjugation check needs a physical-space field")
    check_support(u.values, g)
    ph = _phase(g, g.m)
    vals = u.values
    uh = _SliceCache(lambda k: fw_slice(vals[k], g, ph))
    A = MatrixField(spec.A, g)
    coeffs = _drift_coeffs(spec, g)
    d = spec.drift
    eta = [g.eta_axis.reshape((1,) * g.m + (1,) * j + (-1,) + (1,) * (g.n - 1 - j))
           for j in range(g.n)]
    vs = [g.v_axis.reshape((1,) * l + (-1,) + (1,) * (g.m - 1 - l) + (1,) * g.n)
          for l in range(g.m)]
    # i (B1^T eta) . v
    pot = 0.0
    for l in range(g.m):
        s = sum(d.B1[j, l] * eta[j] for j in range(g.n) if d.B1[j, l])
        if not np.isscalar(s):
            pot = pot + s * vs[l]
    # (B2^T eta)_k coefficient of d/d eta_k
    transport = []
    for k in range(g.n):
        s = sum(d.B2[j, k] * eta[j] for j in range(g.n) if d.B2[j, k])
        transport.append(s)
    wt = time_weights(g)
    num = den = 0.0
    for k in range(g.nt):
        Xk = vals[k]
        Pu = ddt_at(lambda j: vals[j], k, g.nt, g.dt).astype(complex)
        Pu += drift_term(spec, g, Xk, coeffs)
        Pu += A.div_flux(Xk, k=k)
        lhs = fw_slice(Pu, g, ph)
        U = uh(k)
        rhs = ddt_at(uh, k, g.nt, g.dt)
        rhs = rhs + 1j * pot * U + A.div_flux(U, k=k) - d.trace_B2 * U
        for j, cj in enumerate(transport):
            if np.isscalar(cj) and cj == 0:
                continue
            rhs = rhs - cj * _eta_derivative(U, g.m + j, g)
        num += wt[k] * float(np.sum(np.abs(lhs - rhs) ** 2))
        den += wt[k] * float(np.sum(np.abs(lhs) ** 2))
    nyq = _nyquist_streaming(vals, g, ph)
    rel = math.sqrt(num / den) if den > 0 else 0.0
    return {"relative": rel, "abs": math.sqrt(num), "scale": math.sqrt(den),
            "nyquist_fraction": nyq}


def _nyquist_streaming(vals, grid: GridSpec, ph) -> float:
    """Fraction of spectral mass on the two outermost lattice layers
    (|k_j| >= N/2 - 2 for some j), where the eta-stencil uses its one-sided
    closure."""
    shell = np.zeros((grid.nw,) * grid.n, dtype=bool)
    kabs = np.abs(grid.k_axis)
    for j in range(grid.n):
        shape = [1] * grid.n
        shape[j] = -1
        shell |= (kabs.reshape(shape) >= grid.nw // 2 - 2)
    total = outer = 0.0
    for k in range(grid.nt):
        if not np.any(vals[k]):
            continue
        a = np.abs(fw_slice(vals[k], grid, ph)) ** 2
        a = a.reshape((-1,) + (grid.nw,) * grid.n)
        total += float(a.sum())
        outer += float(a[:, shell].sum())
    return outer / total if total > 0 else 0.0


def verify_conjugation(spec: OperatorSpec, u: Field, ceiling: float = 1e-3,
                       nyquist_tol: float = NYQUIST_TOL) -> VerificationReport:
    """Relative L2 discrepancy between the two sides of the conjugation
    identity; precondition: band-limited field (Nyquist-shell mass small)."""
    out = conjugation_discrepancy(spec, u)
    ok = out["nyquist_fraction"] <= nyquist_tol
    status = None if ok else "inconclusive"
    return make_report("conjugation", out["abs"], out["scale"], out["relative"],
                       ceiling, preconditions_ok=ok, status=status,
                       suite="conjugation", grid=u.grid.to_dict(),
                       params={"operator": spec.name}, details=out)


# ---------------------------------------------------------------------------
# commutation with S_R

def _rel(a, b_):
    den = math.sqrt(float(np.sum(np.abs(b_) ** 2)))
    num = math.sqrt(float(np.sum(np.abs(a - b_) ** 2)))
    return num / den if den > 0 else num


def commutation_discrepancies(spec: OperatorSpec, u: Field, plan: TransformPlan) -> dict:
    """Discrepancies of P S_R = S_R P, grad_v S_R = S_R grad_v and
    S_R(c u + d.grad_v u) = c S_R u + d.grad_v S_R u.

    For the first identity both the strong (relative L2) and the weak
    discrepancy ``|<[P, S_R] u, u>| / (||P u|| ||u||)`` are reported.
    """
    from .operator_model import apply_P  # local import keeps module graph flat

    g = u.grid
    Su = apply_S_R(u, plan)
    PSu = apply_P(spec, Su).values
    SPu = apply_S_R(apply_P(spec, u), plan).values
    wt = time_weights(g).reshape((-1,) + (1,) * (len(g.full_shape) - 1))
    comm = PSu - SPu
    strong = math.sqrt(float(np.sum(wt * np.abs(comm) ** 2))
                       / max(float(np.sum(wt * np.abs(SPu) ** 2)), 1e-300))
    Pu = apply_P(spec, u).values
    weak = abs(complex(np.sum(wt * comm * np.conj(u.values)))) / max(
        math.sqrt(float(np.sum(wt * np.abs(Pu) ** 2)) * float(np.sum(wt * np.abs(u.values) ** 2))),
        1e-300)
    grad_err = 0.0
    for i in range(g.m):
        a = centered_diff(Su.values, 1 + i, g.dv)
        b_ = apply_S_R(Field(g, centered_diff(u.values, 1 + i, g.dv)), plan).values
        grad_err = max(grad_err, _rel(a, b_))
    lo_a = apply_S_R(Field(g, lower_order(spec, g, u.values)), plan).values
    lo_b = lower_order(spec, g, Su.values)
    return {"P_strong": strong, "P_weak": weak, "grad_v": grad_err,
            "lower_order": _rel(lo_b, lo_a),
            "mask_time_dependent": bool(np.any(plan.masks != plan.masks[:1]))}


def verify_commutation(spec: OperatorSpec, u: Field, plan: TransformPlan,
                       exact_tol: float = 1e-12, static_tol: float = 1e-10) -> VerificationReport:
    """v-operations must commute with S_R to roundoff; P must too when the
    mask is time-independent.  For moving masks the P-commutator is only
    reported (it vanishes in the continuum, not on a fixed lattice)."""
    out = commutation_discrepancies(spec, u, plan)
    worst = max(out["grad_v"], out["lower_order"])
    ok = worst <= exact_tol
    if not out["mask_time_dependent"]:
        ok = ok and out["P_strong"] <= static_tol
    return make_report("commutation", worst, exact_tol, worst, exact_tol,
                       preconditions_ok=ok, suite="commutation",
                       grid=u.grid.to_dict(), params={"R": plan.R, "b": plan.b},
                       details=out)
