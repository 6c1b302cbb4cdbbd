"""Simulator for the jerk-model error equation.

The state e(s, J, A, V, Q) evolves forward in s by

    d_s e = (B1 J + B2 w) . grad_w e + d_J(a d_J e) - c e - d d_J e
          = -J d_A e - A d_V e - V d_Q e + d_J(a d_J e) - c e - d d_J e,

which is forward parabolic; ``u(t) = e(T - t)`` then solves the
backward-parabolic equation ``P u = c u + d d_J u``.  Coefficients are
functions of the reversed time t = T - s.

Discretization: Strang splitting of exact-characteristic semi-Lagrangian
transport (tensor cubic Lagrange, periodic in w) around an implicit
theta-scheme in J (zero Dirichlet ghosts, flux form matching the harness).
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .coefficients import Coefficient, constant_diffusion, zero_scalar, zero_vector
from .errors import SimulationError, ValidationError
from .linalg_core import flow_map, kalman_matrix, numerical_rank
from .operator_model import (Field, GridSpec, OperatorSpec, ddt, lower_order,
                             pde_residual, validate_assumptions)
from .presets import jerk_drift
from .testfuncs import bump

DIRECTIONS = ("forward-s", "reversed-t")
MAGIC = b"UCTRAJ01"


def build_jerk_operator(a_bar: Coefficient | float = 1.0, c_bar: Coefficient | None = None,
                        d_bar: Coefficient | None = None, lam: float = 1.1,
                        grid: GridSpec | None = None) -> OperatorSpec:
    """OperatorSpec of the jerk model; validates ellipticity and bounds."""
    d = jerk_drift()
    A = constant_diffusion(1, a_bar) if not isinstance(a_bar, Coefficient) else a_bar
    spec = OperatorSpec(d, A, c_bar or zero_scalar(1), d_bar or zero_vector(1),
                        lam=lam, name="jerk")
    rank = numerical_rank(kalman_matrix(d)).rank
    if rank != 3:
        raise ValidationError(f"jerk drift has Kalman rank {rank}, expected 3")
    g = grid or GridSpec(t2=0.04, nt=16, m=1, nv=32, Lv=1.0)
    rep = validate_assumptions(spec, g, samples=1000)
    if not rep.passed:
        raise ValidationError(f"jerk coefficients violate the assumptions: {rep.details}")
    return spec


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    transport_interp: str = "cubic"
    diffusion_theta: float = 0.5
    bc: str = "dirichlet-J/periodic-w"
    mass_tol: float = 1e-8
    boundary_layer: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.transport_interp != "cubic":
            raise ValidationError("only cubic interpolation is supported")
        if not 0.5 <= self.diffusion_theta <= 1.0:
            raise ValidationError("diffusion_theta must lie in [1/2, 1]")
        if self.bc != "dirichlet-J/periodic-w":
            raise ValidationError("only zero-Dirichlet J / periodic w is supported")


@dataclass
class JerkState:
    """One time level: values of shape (nv,) + (nw,)*3 at time ``time``."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    time_direction: str = "forward-s"

    def __post_init__(self):
        g = self.grid
        if g.m != 1 or g.n != 3 or not g.has_w:
            raise ValidationError("jerk states need m = 1, n = 3 and a w lattice")
        shape = (g.nv,) + (g.nw,) * 3
        if self.values.shape != shape:
            raise ValidationError(f"expected shape {shape}, got {self.values.shape}")
        if self.time_direction not in DIRECTIONS:
            raise ValidationError(f"unknown time direction {self.time_direction!r}")

    def with_values(self, values, time=None):
        return JerkState(self.grid, values, self.time if time is None else time,
                         self.time_direction)


# ---------------------------------------------------------------------------
# transport

def _lagrange4(x):
    """Cubic Lagrange weights for offsets -1, 0, 1, 2 at fractional x in [0,1)."""
    return (-x * (x - 1) * (x - 2) / 6, (x + 1) * (x - 1) * (x - 2) / 2,
            -(x + 1) * x * (x - 2) / 2, (x + 1) * x * (x - 1) / 6)


def characteristic_feet(grid: GridSpec, drift, dt: float) -> np.ndarray:
    """Feet of the characteristics through every node, shape (nv,)+(nw,)*3+(3,)."""
    E, F = flow_map(drift, dt)
    J = grid.v_axis.reshape(-1, 1, 1, 1)
    w = grid.w_axis
    W = [w.reshape((1,) * (1 + k) + (-1,) + (1,) * (2 - k)) for k in range(3)]
    shape = (grid.nv,) + (grid.nw,) * 3
    feet = np.empty(shape + (3,))
    for i in range(3):
        acc = F[i, 0] * J + sum(E[i, k] * W[k] for k in range(3))
        feet[..., i] = np.broadcast_to(acc, shape)
    return feet


def _interp_axis(X, axis: int, foot, grid: GridSpec):
    """Periodic cubic Lagrange along ``axis`` at coordinates ``foot``."""
    pos = np.broadcast_to((foot + grid.Lw) / grid.dw, X.shape)
    fl = np.floor(pos)
    base = fl.astype(np.int64)
    wts = _lagrange4(pos - fl)
    out = np.zeros(X.shape, dtype=X.dtype)
    for a in range(4):
        idx = (base + (a - 1)) % grid.nw
        out += wts[a] * np.take_along_axis(X, idx, axis=axis)
    return out


def _w_coord(grid: GridSpec, k: int):
    return grid.w_axis.reshape((1,) * (1 + k) + (-1,) + (1,) * (2 - k))


def transport_step(state: JerkState, dt: float, drift=None) -> JerkState:
    """Semi-Lagrangian step of ``d_s e = (B1 J + B2 w) . grad_w e``.

    Values are pulled back along the exact characteristics ``w' = B1 J + B2 w``
    (J frozen): ``e_new(w) = e(E w + F J)``.  For the unit lower-triangular
    flow of the jerk chain the affine pull-back factors exactly into three
    one-dimensional shears (last axis first), each interpolated by periodic
    cubic Lagrange.  Other drifts use the full tensor stencil.  Feet farther
    than half the box are rejected.
    """
    if dt == 0:
        return state.with_values(state.values.copy())
    if dt < 0:
        raise ValidationError("dt must be nonnegative")
    g = state.grid
    drift = jerk_drift() if drift is None else drift
    E, F = flow_map(drift, dt)
    feet = characteristic_feet(g, drift, dt)
    disp = max(float(np.max(np.abs(feet[..., k] - _w_coord(g, k)))) for k in range(3))
    if disp > g.Lw:
        raise SimulationError(f"characteristic displacement {disp:.3g} exceeds half the box")
    X = state.values
    if not (np.allclose(np.triu(E, 1), 0.0, atol=1e-15) and np.allclose(np.diag(E), 1.0)):
        return state.with_values(_tensor_interp(X, feet, g))
    J = g.v_axis.reshape(-1, 1, 1, 1)
    out = X
    for i in (2, 1, 0):
        # original coordinates w_k (k < i) recovered from foot coordinates y_k
        ws = []
        for k in range(i):
            wk = _w_coord(g, k) - F[k, 0] * J
            for l in range(k):
                wk = wk - E[k, l] * ws[l]
            ws.append(wk)
        shift = F[i, 0] * J
        for k in range(i):
            shift = shift + E[i, k] * ws[k]
        out = _interp_axis(out, 1 + i, _w_coord(g, i) + shift, g)
    return state.with_values(out)


def _tensor_interp(X, feet, g: GridSpec):
    nw = g.nw
    base, wts = [], []
    for i in range(3):
        s = (feet[..., i] + g.Lw) / g.dw
        fl = np.floor(s)
        base.append(fl.astype(np.int64))
        wts.append(_lagrange4(s - fl))
    jidx = np.arange(g.nv).reshape(-1, 1, 1, 1)
    out = np.zeros(X.shape, dtype=X.dtype)
    for a in range(4):
        ia = (base[0] + a - 1) % nw
        for b in range(4):
            ib = (base[1] + b - 1) % nw
            wab = wts[0][a] * wts[1][b]
            for c in range(4):
                ic = (base[2] + c - 1) % nw
                out += wab * wts[2][c] * X[jidx, ia, ib, ic]
    return out


# ---------------------------------------------------------------------------
# diffusion

def _banded_operator(spec: OperatorSpec, grid: GridSpec, t: float):
    """Tridiagonal L e = d_J(a d_J e) - c e - d d_J e as (upper, diag, lower)."""
    dv = grid.dv
    faces = -grid.Lv + np.arange(grid.nv + 1) * dv
    centers = grid.v_axis
    a = spec.A(np.full(faces.shape, t), faces[:, None])[:, 0, 0]
    c = spec.c(np.full(centers.shape, t), centers[:, None])
    d = spec.d(np.full(centers.shape, t), centers[:, None])[:, 0]
    up = a[1:] / dv ** 2 - d / (2 * dv)
    lo = a[:-1] / dv ** 2 + d / (2 * dv)
    diag = -(a[1:] + a[:-1]) / dv ** 2 - c
    return up, diag, lo


def _apply_tri(up, diag, lo, X):
    out = diag.reshape((-1,) + (1,) * (X.ndim - 1)) * X
    out[:-1] += up[:-1].reshape((-1,) + (1,) * (X.ndim - 1)) * X[1:]
    out[1:] += lo[1:].reshape((-1,) + (1,) * (X.ndim - 1)) * X[:-1]
    return out


def diffusion_step(state: JerkState, spec: OperatorSpec, t: float, dt: float,
                   theta: float = 0.5, source=None) -> JerkState:
    """Theta-scheme for ``d_s e = d_J(a d_J e) - c e - d d_J e`` along J lines.

    Coefficients are frozen at reversed time ``t`` (pass the step midpoint
    for second order).  ``source`` is an optional pair ``(f_old, f_new)``
    added with the same theta weighting.
    """
    if dt == 0:
        return state.with_values(state.values.copy())
    g = state.grid
    up, diag, lo = _banded_operator(spec, g, t)
    X = state.values
    rhs = X + (1 - theta) * dt * _apply_tri(up, diag, lo, X)
    if source is not None:
        rhs = rhs + dt * ((1 - theta) * source[0] + theta * source[1])
    ab = np.zeros((3, g.nv))
    ab[0, 1:] = -theta * dt * up[:-1]
    ab[1] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lo[1:]
    try:
        sol = scipy.linalg.solve_banded((1, 1), ab, rhs.reshape(g.nv, -1),
                                        check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SimulationError(f"tridiagonal solve failed at t={t}: {exc}") from exc
    return state.with_values(sol.reshape(X.shape))


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    """Recorded states at the nodes of ``grid`` (``grid.t`` is s or t)."""

    grid: GridSpec
    values: np.ndarray
    time_direction: str
    T: float
    residual: dict | None = None
    meta: dict = field(default_factory=dict)

    def field(self) -> Field:
        return Field(self.grid, self.values, "physical")

    def state(self, k: int) -> JerkState:
        return JerkState(self.grid, self.values[k], float(self.grid.t[k]), self.time_direction)


def boundary_mass_fraction(values, grid: GridSpec, layer: int = 2) -> float:
    """Share of the squared mass within ``layer`` cells of any box face."""
    a = np.abs(values) ** 2
    total = float(a.sum())
    if total == 0.0:
        return 0.0
    inner = a[layer:-layer, layer:-layer, layer:-layer, layer:-layer]
    return float(max(total - inner.sum(), 0.0) / total)


def simulate(state0: JerkState, spec: OperatorSpec, scheme: SchemeConfig, t_end: float,
             nt: int = 65, source=None) -> Trajectory:
    """Strang splitting forward in s; states recorded at ``nt`` uniform nodes.

    ``source(s)`` (optional) returns a forcing sampled on the state grid.
    The step is the largest divisor of the node spacing not exceeding
    ``scheme.dt``.  Boundary-mass breaches abort with the offending time.
    """
    if state0.time_direction != "forward-s":
        raise ValidationError("simulate advances forward-s states")
    if scheme.dt > t_end / 64 * (1 + 1e-12):
        raise ValidationError(f"dt={scheme.dt} exceeds t_end/64={t_end / 64}")
    g0 = state0.grid
    grid = GridSpec(t2=t_end, nt=nt, m=1, nv=g0.nv, Lv=g0.Lv, n=3, nw=g0.nw, Lw=g0.Lw)
    frac = boundary_mass_fraction(state0.values, grid, scheme.boundary_layer)
    if frac > scheme.mass_tol:
        raise ValidationError(f"initial field has boundary mass fraction {frac:.3g}")
    hnode = grid.dt
    sub = max(1, int(math.ceil(hnode / scheme.dt - 1e-9)))
    ds = hnode / sub
    theta = scheme.diffusion_theta
    out = np.empty((nt,) + state0.values.shape, dtype=state0.values.dtype)
    out[0] = state0.values
    st = JerkState(grid, state0.values.copy(), 0.0)
    s = 0.0
    for k in range(1, nt):
        for _ in range(sub):
            st = transport_step(st, 0.5 * ds, spec.drift)
            src = None if source is None else (source(s), source(s + ds))
            st = diffusion_step(st, spec, t_end - (s + 0.5 * ds), ds, theta, src)
            st = transport_step(st, 0.5 * ds, spec.drift)
            s += ds
            frac = boundary_mass_fraction(st.values, grid, scheme.boundary_layer)
            if frac > scheme.mass_tol:
                raise SimulationError(
                    f"boundary mass fraction {frac:.3g} exceeds {scheme.mass_tol} at s={s:.6g}")
        out[k] = st.values
    traj = Trajectory(grid, out, "forward-s", t_end,
                      meta={"ds": ds, "substeps": sub, "theta": theta})
    if source is None:
        traj.residual = pde_residual(spec, time_reverse(traj).field())
    return traj


def time_reverse(traj: Trajectory) -> Trajectory:
    """Relabel s = T - t; the reversed trajectory solves P u = c u + d d_J u."""
    flip = {"forward-s": "reversed-t", "reversed-t": "forward-s"}[traj.time_direction]
    return Trajectory(traj.grid, np.ascontiguousarray(traj.values[::-1]), flip, traj.T,
                      traj.residual, dict(traj.meta))


def forward_residual(spec: OperatorSpec, traj: Trajectory) -> np.ndarray:
    """Pointwise residual of the forward-s equation for a forward-s trajectory.

    ``d_s e - b . grad_w e - d_J(a d_J e) + c e + d d_J e`` with coefficients
    at t = T - s; equals minus the reversed residual of u at t = T - s.
    """
    from .operator_model import MatrixField, _drift_coeffs, drift_term
    if traj.time_direction != "forward-s":
        raise ValidationError("expected a forward-s trajectory")
    g = traj.grid
    X = traj.values
    tt = traj.T - g.t
    A = MatrixField(spec.A, g, t=tt)
    coeffs = _drift_coeffs(spec, g)
    rev = GridSpec(g.t2, g.nt, g.m, g.nv, g.Lv, g.n, g.nw, g.Lw)
    dts = ddt(X, g.dt)
    out = np.empty(X.shape, dtype=complex)
    for k in range(g.nt):
        r = dts[k] - drift_term(spec, g, X[k], coeffs) - A.div_flux(X[k], k=k)
        r = r + lower_order(spec, rev, X[k], k=g.nt - 1 - k)
        out[k] = r
    return out


def reversed_residual(spec: OperatorSpec, traj: Trajectory) -> np.ndarray:
    """Pointwise ``P u - c u - d d_J u`` for a reversed-t trajectory."""
    from .operator_model import MatrixField, _drift_coeffs, drift_term
    if traj.time_direction != "reversed-t":
        raise ValidationError("expected a reversed-t trajectory")
    g = traj.grid
    X = traj.values
    A = MatrixField(spec.A, g)
    coeffs = _drift_coeffs(spec, g)
    dts = ddt(X, g.dt)
    out = np.empty(X.shape, dtype=complex)
    for k in range(g.nt):
        out[k] = (dts[k] + drift_term(spec, g, X[k], coeffs) + A.div_flux(X[k], k=k)
                  - lower_order(spec, g, X[k], k=k))
    return out


# ---------------------------------------------------------------------------
# manufactured solution

def _bump_derivs(x):
    """bump, bump', bump'' at x (support |x| < 1)."""
    f = bump(x)
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    q = np.where(inside, 1.0 - x ** 2, 1.0)
    p1 = np.where(inside, -2 * x / q ** 2, 0.0)
    p1d = np.where(inside, -2 / q ** 2 - 8 * x ** 2 / q ** 3, 0.0)
    return f, f * p1, f * (p1 ** 2 + p1d)


@dataclass(frozen=True)
class Manufactured:
    """e*(s, J, w) = (1 + s/T) psi(J) beta(A) beta(V) cos-profile(Q).

    psi, beta are bumps of half-width ``frac`` of the box; the Q factor is
    ``2 + cos(pi Q / Lw)``.  ``source`` supplies the exact forcing.
    """

    spec: OperatorSpec
    grid: GridSpec
    T: float
    frac: float = 0.7

    def _factors(self):
        g = self.grid
        hJ, hw = self.frac * g.Lv, self.frac * g.Lw
        J = g.v_axis
        w = g.w_axis
        pJ = [d / hJ ** i for i, d in enumerate(_bump_derivs(J / hJ))]
        pw = [d / hw ** i for i, d in enumerate(_bump_derivs(w / hw))]
        kq = math.pi / g.Lw
        q = (2 + np.cos(kq * w), -kq * np.sin(kq * w))
        return J, w, pJ, pw, q

    def _shape(self, x, axis):
        s = [1, 1, 1, 1]
        s[axis] = -1
        return np.asarray(x).reshape(s)

    def exact(self, s) -> np.ndarray:
        J, w, pJ, pw, q = self._factors()
        sh = self._shape
        return (1 + s / self.T) * (sh(pJ[0], 0) * sh(pw[0], 1) * sh(pw[0], 2) * sh(q[0], 3))

    def source(self, s) -> np.ndarray:
        J, w, pJ, pw, q = self._factors()
        sh = self._shape
        phi, dphi = 1 + s / self.T, 1.0 / self.T
        psi, dpsi, ddpsi = (sh(x, 0) for x in pJ)
        bA, dbA = sh(pw[0], 1), sh(pw[1], 1)
        bV, dbV = sh(pw[0], 2), sh(pw[1], 2)
        cq, dcq = sh(q[0], 3), sh(q[1], 3)
        base = bA * bV * cq
        e = phi * psi * base
        eJ = phi * dpsi * base
        eJJ = phi * ddpsi * base
        grads = [phi * psi * dbA * bV * cq, phi * psi * bA * dbV * cq, phi * psi * bA * bV * dcq]
        t = self.T - s
        Jc = J[:, None]
        tt = np.full(J.shape, t)
        a = self.spec.A(tt, Jc)[:, 0, 0]
        aJ = self.spec.A.dv(tt, Jc)[:, 0, 0, 0]
        c = self.spec.c(tt, Jc)
        d = self.spec.d(tt, Jc)[:, 0]
        # transport b . grad_w e with b_i = (B1 J + B2 w)_i
        B1, B2 = self.spec.drift.B1, self.spec.drift.B2
        Wk = [sh(w, 1 + k) for k in range(3)]
        trans = 0.0
        for i in range(3):
            bi = B1[i, 0] * sh(J, 0) + sum(B2[i, k] * Wk[k] for k in range(3) if B2[i, k])
            trans = trans + bi * grads[i]
        diff = sh(a, 0) * eJJ + sh(aJ, 0) * eJ
        return dphi * psi * base - trans - diff + sh(c, 0) * e + sh(d, 0) * eJ


def convergence_study(spec: OperatorSpec, levels=((16, 8, 8), (32, 16, 16), (64, 32, 32)),
                      T: float = 0.04, Lv: float = 1.0, Lw: float = 1.0,
                      theta: float = 0.5) -> dict:
    """Manufactured-solution errors under joint (ds, dJ, dw) refinement.

    ``levels`` lists (nv, nw, steps); returns relative L2 errors at s = T
    and observed orders."""
    errs = []
    for nv, nw, steps in levels:
        g = GridSpec(t2=T, nt=16, m=1, nv=nv, Lv=Lv, n=3, nw=nw, Lw=Lw)
        man = Manufactured(spec, g, T)
        st = JerkState(g, man.exact(0.0))
        ds = T / steps
        s = 0.0
        for _ in range(steps):
            st = transport_step(st, 0.5 * ds, spec.drift)
            st = diffusion_step(st, spec, T - (s + 0.5 * ds), ds, theta,
                                (man.source(s), man.source(s + ds)))
            st = transport_step(st, 0.5 * ds, spec.drift)
            s += ds
        ex = man.exact(T)
        errs.append(float(np.linalg.norm(st.values - ex) / np.linalg.norm(ex)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return {"errors": errs, "orders": orders, "levels": [list(l) for l in levels]}


# ---------------------------------------------------------------------------
# export

def export_trajectory(traj: Trajectory, path: str) -> tuple[str, str]:
    """Write ``path`` (binary) and ``path + '.json'`` (metadata) atomically.

    Binary layout, little-endian: 8-byte magic ``UCTRAJ01``, uint32 ndim,
    ndim x uint64 dims, then float64 samples in row-major order (complex
    fields store the real part only and must be real to roundoff).
    """
    vals = np.asarray(traj.values)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag), initial=0.0) > 1e-12 * max(np.max(np.abs(vals)), 1.0):
            raise ValidationError("trajectory is not real-valued")
        vals = vals.real
    header = MAGIC + struct.pack("<I", vals.ndim) + struct.pack(f"<{vals.ndim}Q", *vals.shape)
    body = np.ascontiguousarray(vals, dtype="<f8").tobytes()
    meta = {"grid": traj.grid.to_dict(), "time_direction": traj.time_direction,
            "T": traj.T, "residual": traj.residual, "meta": traj.meta,
            "layout": "magic(8) ndim(u32) dims(u64*ndim) float64 row-major, little-endian"}
    _atomic_write(path, header + body)
    _atomic_write(path + ".json", json.dumps(meta, sort_keys=True, indent=2).encode())
    return path, path + ".json"


def read_trajectory(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValidationError("not a trajectory file")
    (ndim,) = struct.unpack_from("<I", data, 8)
    dims = struct.unpack_from(f"<{ndim}Q", data, 12)
    off = 12 + 8 * ndim
    return np.frombuffer(data, dtype="<f8", offset=off).reshape(dims)


def _atomic_write(path: str, data: bytes):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
