"""The ultraparabolic operator

    P = d_t + (B1 v + B2 w) . grad_w + div_v(A(t, v) grad_v)

its standing assumptions, and its discrete action on structured grids.

Discretization: 4th-order differences in t, spectral differentiation in the
periodic w-box, 2nd-order conservative flux form in v (cell-centered nodes,
zero values outside the v-box).  Time-v "slices" (no w axis) carry the
conjugated operators P~_rho and the K1/K2 split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .coefficients import Coefficient, constant_diffusion, zero_scalar, zero_vector
from .errors import DimensionError, StateError, SupportError, ValidationError
from .linalg_core import DriftPair, exp_stack
from .report import VerificationReport, make_report

SUPPORT_MARGIN = 4
SUPPORT_TOL = 1e-12
SPACES = ("physical", "frequency", "slice")


# ---------------------------------------------------------------------------
# grids and fields

@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, t2] x [-Lv, Lv]^m x [-Lw, Lw)^n.

    Time nodes include both ends.  v nodes are cell centers.  w nodes are
    ``-Lw + j dw`` (periodic).  ``nw = 0`` describes a time-v slice grid.
    """

    t2: float
    nt: int
    m: int
    nv: int
    Lv: float
    n: int = 0
    nw: int = 0
    Lw: float = 1.0

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValidationError("t2 must be positive")
        if self.nt < 16:
            raise ValidationError("nt must be >= 16")
        if self.nv < 16:
            raise ValidationError("nv must be >= 16")
        if self.m < 1 or self.Lv <= 0:
            raise ValidationError("need m >= 1 and Lv > 0")
        if self.nw:
            if self.nw & (self.nw - 1):
                raise ValidationError("nw must be a power of two")
            if self.n < 1 or self.Lw <= 0:
                raise ValidationError("need n >= 1 and Lw > 0 when nw > 0")

    @property
    def has_w(self) -> bool:
        return self.nw > 0

    @property
    def dt(self) -> float:
        return self.t2 / (self.nt - 1)

    @property
    def dv(self) -> float:
        return 2.0 * self.Lv / self.nv

    @property
    def dw(self) -> float:
        return 2.0 * self.Lw / self.nw

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.t2, self.nt)

    @property
    def v_axis(self) -> np.ndarray:
        return -self.Lv + (np.arange(self.nv) + 0.5) * self.dv

    @property
    def w_axis(self) -> np.ndarray:
        return -self.Lw + np.arange(self.nw) * self.dw

    @property
    def eta_axis(self) -> np.ndarray:
        """Dual lattice (spacing pi/Lw) in numpy wraparound order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nw, d=self.dw)

    @property
    def k_axis(self) -> np.ndarray:
        """Integer mode numbers matching ``eta_axis``."""
        return np.fft.fftfreq(self.nw, d=1.0 / self.nw).astype(int)

    @property
    def slice_shape(self) -> tuple:
        return (self.nt,) + (self.nv,) * self.m

    @property
    def full_shape(self) -> tuple:
        return self.slice_shape + (self.nw,) * self.n if self.has_w else self.slice_shape

    @property
    def v_axes(self) -> tuple:
        return tuple(range(1, 1 + self.m))

    @property
    def w_axes(self) -> tuple:
        return tuple(range(1 + self.m, 1 + self.m + self.n)) if self.has_w else ()

    def v_mesh(self) -> np.ndarray:
        """Cell centers as an array of shape (nv,)*m + (m,)."""
        axes = np.meshgrid(*([self.v_axis] * self.m), indexing="ij")
        return np.stack(axes, axis=-1)

    def slice_grid(self) -> "GridSpec":
        return GridSpec(self.t2, self.nt, self.m, self.nv, self.Lv)

    def to_dict(self) -> dict:
        return {"t2": self.t2, "nt": self.nt, "m": self.m, "nv": self.nv,
                "Lv": self.Lv, "n": self.n, "nw": self.nw, "Lw": self.Lw}


def _readonly_view(a):
    a = np.asarray(a)
    view = a.view()
    view.setflags(write=False)
    return view


@dataclass(frozen=True, eq=False)
class Field:
    """Samples on a grid.  ``space`` is 'physical' (w), 'frequency' (eta)
    or 'slice' (no w axis).

    Values are exposed read-only.  ``spectrum`` optionally caches the
    w-Fourier coefficients of a physical field (set by projections so that
    repeated masking is exact).
    """

    grid: GridSpec
    values: np.ndarray
    space: str = "physical"
    spectrum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValidationError(f"unknown space {self.space!r}")
        vals = np.asarray(self.values)
        want = self.grid.slice_shape if self.space == "slice" else self.grid.full_shape
        if self.space != "slice" and not self.grid.has_w:
            raise DimensionError("physical/frequency fields need a w axis")
        if vals.shape != want:
            raise DimensionError(f"field shape {vals.shape} does not match grid {want}")
        if not np.issubdtype(vals.dtype, np.inexact):
            vals = vals.astype(float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field contains non-finite values")
        object.__setattr__(self, "values", _readonly_view(vals))
        if self.spectrum is not None:
            object.__setattr__(self, "spectrum", _readonly_view(self.spectrum))

    def with_values(self, values, space=None, spectrum=None) -> "Field":
        return Field(self.grid, values, self.space if space is None else space,
                     spectrum)

    def norm(self) -> float:
        """Discrete L2 norm (trapezoid in t, midpoint in v and w)."""
        return float(np.sqrt(quad(self.grid, np.abs(self.values) ** 2,
                                  self.space)))


def time_weights(grid: GridSpec) -> np.ndarray:
    w = np.full(grid.nt, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


def quad(grid: GridSpec, density, space="slice") -> float:
    """Integrate a nonnegative or signed density over the field's domain."""
    dens = np.asarray(density)
    per_t = dens.reshape(grid.nt, -1).sum(axis=1)
    vol = grid.dv ** grid.m
    if space == "physical":
        vol *= grid.dw ** grid.n
    elif space == "frequency":
        # unitary DFT: counting measure matches the physical w-sum times dw^n
        vol *= grid.dw ** grid.n
    return float(np.dot(time_weights(grid), per_t) * vol)


def slice_absmax(values, grid: GridSpec) -> np.ndarray:
    """max |values| over w for each (t, v) node, computed slice by slice."""
    out = np.empty(grid.slice_shape)
    w_axes = tuple(range(grid.m, grid.m + (values.ndim - 1 - grid.m)))
    for k in range(grid.nt):
        a = np.abs(values[k])
        out[k] = a.max(axis=w_axes) if w_axes else a
    return out


def check_support(values, grid: GridSpec, margin: int = SUPPORT_MARGIN,
                  tol: float = SUPPORT_TOL):
    """Raise SupportError unless values vanish near the t ends and v boundary."""
    amax = slice_absmax(values, grid)
    top = amax.max()
    if top == 0.0:
        return
    mask = np.zeros(grid.slice_shape, dtype=bool)
    mask[:margin] = mask[-margin:] = True
    for ax in range(1, 1 + grid.m):
        idx = [slice(None)] * (1 + grid.m)
        idx[ax] = slice(0, margin)
        mask[tuple(idx)] = True
        idx[ax] = slice(-margin, None)
        mask[tuple(idx)] = True
    worst = amax[mask].max() if mask.any() else 0.0
    if worst > tol * top:
        loc = np.unravel_index(np.argmax(np.where(mask, amax, -1.0)), amax.shape)
        raise SupportError(
            f"field not compactly supported: |u| = {worst:.3e} "
            f"(relative {worst / top:.3e}) at (t, v) index {tuple(int(i) for i in loc)}"
            f" within {margin} cells of the boundary")


# ---------------------------------------------------------------------------
# time differences

_D_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D_FIRST = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D_SECOND = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def time_stencil(k: int, nt: int):
    """(offsets, weights) of the 4th-order first-derivative stencil at node k.

    The end stencils are the mirror images (with sign flip) of each other,
    so the operator is odd under time reversal.
    """
    if 2 <= k <= nt - 3:
        return np.arange(-2, 3), _D_INTERIOR
    if k == 0:
        return np.arange(0, 5), _D_FIRST
    if k == 1:
        return np.arange(-1, 4), _D_SECOND
    if k == nt - 1:
        return -np.arange(0, 5), -_D_FIRST
    return -np.arange(-1, 4), -_D_SECOND


def ddt(values, dt: float) -> np.ndarray:
    """4th-order time derivative along axis 0."""
    f = np.asarray(values)
    nt = f.shape[0]
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / 12.0
    for k in (0, 1, nt - 2, nt - 1):
        offs, wts = time_stencil(k, nt)
        out[k] = sum(wt * f[k + o] for o, wt in zip(offs, wts))
    return out / dt


def ddt_at(getter, k: int, nt: int, dt: float):
    """Time derivative at node k with slices supplied by ``getter(j)``."""
    offs, wts = time_stencil(k, nt)
    acc = None
    for o, wt in zip(offs, wts):
        if wt == 0.0:
            continue
        term = wt * getter(k + o)
        acc = term if acc is None else acc + term
    return acc / dt


# ---------------------------------------------------------------------------
# v-differences

def _pad_axis(X, axis):
    pad = [(0, 0)] * X.ndim
    pad[axis] = (1, 1)
    return np.pad(X, pad)


def forward_diff(X, axis, dv):
    """Differences across all nv+1 faces (zero values outside the box)."""
    return np.diff(_pad_axis(X, axis), axis=axis) / dv


def centered_diff(X, axis, dv):
    P = _pad_axis(X, axis)
    n = X.shape[axis]
    hi = np.take(P, np.arange(2, n + 2), axis=axis)
    lo = np.take(P, np.arange(0, n), axis=axis)
    return (hi - lo) / (2.0 * dv)


class MatrixField:
    """A matrix coefficient sampled for the flux-form v-operator.

    Diagonal entries live on cell faces along their own axis; off-diagonal
    entries live at cell centers.  Arrays have a leading time axis.
    """

    def __init__(self, fn, grid: GridSpec, t=None):
        self.grid = grid
        m = grid.m
        t = grid.t if t is None else np.asarray(t, dtype=float)
        self.t = t
        centers = grid.v_axis
        faces = -grid.Lv + np.arange(grid.nv + 1) * grid.dv
        self.diag = []
        for i in range(m):
            axes = [centers] * m
            axes[i] = faces
            V = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            T = t.reshape((-1,) + (1,) * m)
            vals = fn(T, V[None])
            self.diag.append(np.ascontiguousarray(vals[..., i, i]))
        self.off = {}
        if m > 1:
            V = grid.v_mesh()[None]
            T = t.reshape((-1,) + (1,) * m)
            vals = fn(T, V)
            for i in range(m):
                for j in range(m):
                    if i != j and np.any(vals[..., i, j] != 0.0):
                        self.off[(i, j)] = np.ascontiguousarray(vals[..., i, j])

    def _bcast(self, arr, X, k):
        a = arr if k is None else arr[k]
        extra = X.ndim - a.ndim
        return a.reshape(a.shape + (1,) * extra)

    def div_flux(self, X, k=None):
        """div_v(A grad_v X).  Leading axis of X is time unless ``k`` is given
        (then X is a single time slice at node k)."""
        g = self.grid
        off = 0 if k is not None else 1
        out = np.zeros(X.shape, dtype=np.result_type(X, float))
        for i in range(g.m):
            ax = off + i
            flux = self._bcast(self.diag[i], X, k) * forward_diff(X, ax, g.dv)
            out += np.diff(flux, axis=ax) / g.dv
        for (i, j), a in self.off.items():
            inner = self._bcast(a, X, k) * centered_diff(X, off + j, g.dv)
            out += centered_diff(inner, off + i, g.dv)
        return out

    def energy_density(self, X, Y=None, k=None):
        """Re <A grad X, grad Y> summed over v (and any trailing axes).

        Returns one value per time node (or a scalar for a single slice).
        Summation by parts gives exactly ``-Re <div_flux(X), Y>``.
        """
        g = self.grid
        Y = X if Y is None else Y
        off = 0 if k is not None else 1
        total = 0.0
        for i in range(g.m):
            ax = off + i
            a = self._bcast(self.diag[i], X, k)
            gx = forward_diff(X, ax, g.dv)
            gy = forward_diff(Y, ax, g.dv)
            total = total + _sum_tail(a * np.real(gx * np.conj(gy)), k)
        for (i, j), a in self.off.items():
            gx = centered_diff(X, off + j, g.dv)
            gy = centered_diff(Y, off + i, g.dv)
            total = total + _sum_tail(self._bcast(a, X, k) * np.real(gx * np.conj(gy)), k)
        return total * g.dv ** g.m


def _sum_tail(a, k):
    if k is not None:
        return a.sum()
    return a.reshape(a.shape[0], -1).sum(axis=1)


def grad_sq_density(X, grid: GridSpec, k=None):
    """sum over faces of |D+ X|^2 times dv^m (per time node)."""
    off = 0 if k is not None else 1
    total = 0.0
    for i in range(grid.m):
        gx = forward_diff(X, off + i, grid.dv)
        total = total + _sum_tail(np.abs(gx) ** 2, k)
    return total * grid.dv ** grid.m


# ---------------------------------------------------------------------------
# operator specification

@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Data (B1, B2, A, c, d, lambda) defining P and the lower-order terms."""

    drift: DriftPair
    A: Coefficient
    c: Coefficient | None = None
    d: Coefficient | None = None
    lam: float = 2.0
    name: str = ""

    def __post_init__(self):
        m = self.drift.m
        if self.c is None:
            object.__setattr__(self, "c", zero_scalar(m))
        if self.d is None:
            object.__setattr__(self, "d", zero_vector(m))
        if not self.lam > 1.0:
            raise ValidationError("lambda must exceed 1")
        for coef, kind in ((self.A, "matrix"), (self.c, "scalar"), (self.d, "vector")):
            if isinstance(coef, Coefficient) and (coef.kind != kind or coef.m != m):
                raise DimensionError(f"coefficient {kind} has wrong kind or dimension")

    @property
    def m(self) -> int:
        return self.drift.m

    @property
    def n(self) -> int:
        return self.drift.n

    def to_dict(self) -> dict:
        return {"name": self.name, "lambda": self.lam, **self.drift.to_dict(),
                "A": self.A.to_dict(), "c": self.c.to_dict(), "d": self.d.to_dict()}

    @classmethod
    def simple(cls, B1, B2, a=1.0, lam=2.0, name=""):
        d = DriftPair(B1, B2)
        return cls(d, constant_diffusion(d.m, a), lam=lam, name=name)


def _check_grid(spec: OperatorSpec, grid: GridSpec, need_w: bool):
    if grid.m != spec.m:
        raise DimensionError(f"grid has m={grid.m}, operator has m={spec.m}")
    if need_w and (not grid.has_w or grid.n != spec.n):
        raise DimensionError(f"grid w-dimension {grid.n} != operator n={spec.n}")


# ---------------------------------------------------------------------------
# assumptions

def validate_assumptions(spec: OperatorSpec, grid: GridSpec, samples: int = 1000,
                         seed: int = 0, max_nodes: int = 20000) -> VerificationReport:
    """Sample symmetry, two-sided ellipticity and the combined bound

        |d_t a_ij| + |grad_v a_ij| + |c| + |d| <= lambda

    on grid nodes plus ``samples`` random interior points.  Derivatives are
    central finite differences of the handles.
    """
    if samples < 1000:
        raise ValidationError("samples must be >= 1000")
    _check_grid(spec, grid, need_w=False)
    m = spec.m
    rng = np.random.default_rng(seed)
    T, V = np.meshgrid(grid.t, np.arange(grid.nv ** m), indexing="ij")
    vm = grid.v_mesh().reshape(-1, m)
    nodes_t = T.ravel()
    nodes_v = vm[V.ravel()]
    if nodes_t.size > max_nodes:
        pick = np.linspace(0, nodes_t.size - 1, max_nodes).astype(int)
        nodes_t, nodes_v = nodes_t[pick], nodes_v[pick]
    rt = rng.uniform(0.0, grid.t2, samples)
    rv = rng.uniform(-grid.Lv, grid.Lv, (samples, m))
    t = np.concatenate([nodes_t, rt])
    v = np.concatenate([nodes_v, rv])

    def evaluate(coef, tt, vv, label):
        vals = np.asarray(coef(tt, vv), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            idx = np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=1))[0, 0]
            raise ValidationError(
                f"coefficient {label} is non-finite at t={tt[idx]:.6g}, "
                f"v={np.array2string(vv[idx], precision=6)}")
        return vals

    A = evaluate(spec.A, t, v, "A")
    c = evaluate(spec.c, t, v, "c")
    d = evaluate(spec.d, t, v, "d")
    anorm = np.linalg.norm(A, ord=2, axis=(-2, -1))
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max(axis=(-2, -1))
    sym_ok = bool(np.all(asym <= 1e-12 * np.maximum(anorm, 1e-300)))
    eig = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
    lo, hi = eig[:, 0], eig[:, -1]

    ht = 1e-6 * max(grid.t2, 1.0)
    hv = 1e-6 * max(grid.Lv, 1.0)
    dA_t = (evaluate(spec.A, t + ht, v, "A") - evaluate(spec.A, t - ht, v, "A")) / (2 * ht)
    grad2 = np.zeros_like(A)
    for l in range(m):
        e = np.zeros(m)
        e[l] = hv
        dl = (evaluate(spec.A, t, v + e, "A") - evaluate(spec.A, t, v - e, "A")) / (2 * hv)
        grad2 += dl ** 2
    bound = (np.abs(dA_t) + np.sqrt(grad2)
             + np.abs(c)[:, None, None] + np.linalg.norm(d, axis=-1)[:, None, None])
    bound_max = bound.max(axis=(-2, -1))

    lam = spec.lam
    margins = {
        "symmetry": float(np.min(1e-12 * anorm - asym)),
        "ellipticity_lower": float(np.min(lo) - 1.0 / lam),
        "ellipticity_upper": float(lam - np.max(hi)),
        "bounds": float(lam - np.max(bound_max)),
    }
    min_lo = float(np.min(lo))
    lam_needed = max(float(np.max(hi)), 1.0 / min_lo if min_lo > 0 else np.inf,
                     float(np.max(bound_max)))
    failed = [k for k, val in margins.items() if val < 0]
    return make_report(
        "assumptions", lam_needed, lam, lam_needed, lam,
        preconditions_ok=sym_ok, suite="assumptions",
        params={"lambda": lam, "samples": int(t.size), "seed": seed},
        grid=grid.to_dict(),
        details={"margins": margins, "failed": failed,
                 "min_eigenvalue": min_lo, "max_eigenvalue": float(np.max(hi))})


# ---------------------------------------------------------------------------
# operator application

def _drift_coeffs(spec: OperatorSpec, grid: GridSpec):
    """Per w-axis coefficient (B1 v + B2 w)_j broadcast over (v..., w...)."""
    m, n = spec.m, spec.n
    vs = [grid.v_axis.reshape((1,) * l + (-1,) + (1,) * (m - 1 - l) + (1,) * n)
          for l in range(m)]
    ws = [grid.w_axis.reshape((1,) * m + (1,) * k + (-1,) + (1,) * (n - 1 - k))
          for k in range(n)]
    out = []
    for j in range(n):
        acc = 0.0
        for l in range(m):
            if spec.drift.B1[j, l]:
                acc = acc + spec.drift.B1[j, l] * vs[l]
        for k in range(n):
            if spec.drift.B2[j, k]:
                acc = acc + spec.drift.B2[j, k] * ws[k]
        out.append(acc)
    return out


def w_derivative(X, axis: int, grid: GridSpec):
    """Spectral d/dw along ``axis`` (all modes kept, including Nyquist)."""
    eta = grid.eta_axis
    shape = [1] * X.ndim
    shape[axis] = -1
    Xh = scipy.fft.fft(X, axis=axis)
    Xh *= 1j * eta.reshape(shape)
    return scipy.fft.ifft(Xh, axis=axis, overwrite_x=True)


def drift_term(spec: OperatorSpec, grid: GridSpec, X, coeffs=None):
    """(B1 v + B2 w) . grad_w X for one time slice X of shape (nv,)*m + (nw,)*n."""
    coeffs = _drift_coeffs(spec, grid) if coeffs is None else coeffs
    out = np.zeros(X.shape, dtype=complex)
    for j, cj in enumerate(coeffs):
        if np.isscalar(cj) and cj == 0.0:
            continue
        out += cj * w_derivative(X, grid.m + j, grid)
    return out


def apply_P(spec: OperatorSpec, u: Field, check: bool = True) -> Field:
    """``d_t u + (B1 v + B2 w) . grad_w u + div_v(A grad_v u)``, slice by slice."""
    if u.space != "physical":
        raise StateError("apply_P needs a physical-space field")
    g = u.grid
    _check_grid(spec, g, need_w=True)
    if check:
        check_support(u.values, g)
    A = MatrixField(spec.A, g)
    coeffs = _drift_coeffs(spec, g)
    vals = u.values
    out = np.empty(g.full_shape, dtype=complex)
    for k in range(g.nt):
        acc = ddt_at(lambda j: vals[j], k, g.nt, g.dt).astype(complex)
        acc += drift_term(spec, g, vals[k], coeffs)
        acc += A.div_flux(vals[k], k=k)
        out[k] = acc
    return u.with_values(out)


def lower_order(spec: OperatorSpec, grid: GridSpec, X, k=None):
    """c u + d . grad_v u with centered v-differences."""
    m = grid.m
    off = 0 if k is not None else 1
    t = grid.t if k is None else grid.t[k:k + 1]
    V = grid.v_mesh()[None]
    T = t.reshape((-1,) + (1,) * m)
    c = spec.c(T, V)
    d = spec.d(T, V)
    if k is not None:
        c, d = c[0], d[0]
    extra = X.ndim - c.ndim
    out = c.reshape(c.shape + (1,) * extra) * X
    for i in range(m):
        di = d[..., i]
        if np.any(di != 0.0):
            out = out + di.reshape(di.shape + (1,) * extra) * centered_diff(X, off + i, grid.dv)
    return out


def pde_residual(spec: OperatorSpec, u: Field, interior: int = 2) -> dict:
    """Residual of ``P u = c u + d . grad_v u``.

    Returns the relative residual over interior time nodes (``interior``
    nodes are dropped at each end, where one-sided stencils and the
    initial/terminal data live) together with the absolute norms.
    """
    g = u.grid
    _check_grid(spec, g, need_w=True)
    A = MatrixField(spec.A, g)
    coeffs = _drift_coeffs(spec, g)
    vals = u.values
    wt = time_weights(g)
    res2 = ref2 = 0.0
    for k in range(interior, g.nt - interior):
        Pu = ddt_at(lambda j: vals[j], k, g.nt, g.dt).astype(complex)
        Pu += drift_term(spec, g, vals[k], coeffs)
        Pu += A.div_flux(vals[k], k=k)
        rhs = lower_order(spec, g, vals[k], k=k)
        r = Pu - rhs
        res2 += wt[k] * float(np.sum(np.abs(r) ** 2))
        ref2 += wt[k] * float(np.sum(np.abs(Pu) ** 2) + np.sum(np.abs(vals[k]) ** 2) / g.dt ** 2)
    vol = g.dv ** g.m * g.dw ** g.n
    res = np.sqrt(res2 * vol)
    ref = np.sqrt(ref2 * vol)
    return {"residual": float(res), "scale": float(ref),
            "relative": float(res / ref) if ref > 0 else 0.0}


def beta_of_t(spec: OperatorSpec, t, rho) -> np.ndarray:
    """``B1^T exp(-t B2^T) rho`` for each t; shape (len(t), m)."""
    rho = np.asarray(rho, dtype=float).reshape(spec.n)
    E = exp_stack(spec.drift.B2.T, -np.atleast_1d(np.asarray(t, dtype=float)))
    return (E @ rho) @ spec.drift.B1


def _potential(spec, grid, rho):
    """(B1^T exp(-t B2^T) rho) . v on the slice grid."""
    beta = beta_of_t(spec, grid.t, rho)
    V = grid.v_mesh()
    return np.einsum("tm,...m->t...", beta, V)


def _as_slice(h: Field, spec: OperatorSpec) -> GridSpec:
    if h.space != "slice":
        raise StateError("expected a time-v slice field")
    _check_grid(spec, h.grid, need_w=False)
    return h.grid


def apply_P_tilde(spec: OperatorSpec, h: Field, rho, include_trace: bool = True,
                  check: bool = True) -> Field:
    """``d_t h + i beta(t) . v h + div_v(A grad_v h) - tr(B2)/2 h``.

    With ``include_trace=False`` this is the trace-free operator P~0.
    """
    g = _as_slice(h, spec)
    if check:
        check_support(h.values, g)
    X = h.values
    out = ddt(X, g.dt).astype(complex)
    out += 1j * _potential(spec, g, rho) * X
    out += MatrixField(spec.A, g).div_flux(X)
    if include_trace and spec.drift.trace_B2 != 0.0:
        out -= 0.5 * spec.drift.trace_B2 * X
    return h.with_values(out)


def apply_K_split(spec: OperatorSpec, h: Field, rho, alpha: float, b: float,
                  check: bool = True):
    """Skew part ``K1 h = d_t h + i beta . v h`` and self-adjoint part
    ``K2 h = alpha/(t+b) h + div_v(A grad_v h)``.

    For the conjugated function the pair satisfies
    ``(t+b)^-a P~0 h = (K1 + K2)((t+b)^-a h)``.
    """
    if alpha < 1:
        raise ValidationError("alpha must be >= 1")
    g = _as_slice(h, spec)
    if not 0 < b <= g.t2:
        raise ValidationError("need 0 < b <= t2")
    if check:
        check_support(h.values, g)
    X = h.values
    K1 = ddt(X, g.dt).astype(complex) + 1j * _potential(spec, g, rho) * X
    tb = (g.t + b).reshape((-1,) + (1,) * g.m)
    K2 = (alpha / tb) * X + MatrixField(spec.A, g).div_flux(X)
    return h.with_values(K1), h.with_values(K2.astype(complex))
