"""Built-in coefficient families for A(t, v), c(t, v) and d(t, v).

Every coefficient has the form ``base + s(t, v) * shape`` where ``s`` is a
scalar modulation:

    constant     s = 0
    affine       s = slope_t * t + slope_v . v
    sinusoidal   s = amp * sin(k_v . v + omega * t + phase)

``base`` and ``shape`` are an m x m matrix (diffusion), a scalar (c) or an
m-vector (d).  Handles are vectorized: ``t`` of shape S and ``v`` of shape
S + (m,) give values of shape S + value_shape.  Coefficients never depend
on the degenerate variable w.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

FAMILIES = ("constant", "affine", "sinusoidal")
KINDS = ("matrix", "scalar", "vector")


def _ro(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Coefficient:
    kind: str
    m: int
    base: np.ndarray
    family: str = "constant"
    shape: np.ndarray | None = None
    slope_t: float = 0.0
    slope_v: np.ndarray | None = None
    amp: float = 0.0
    k_v: np.ndarray | None = None
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown coefficient kind {self.kind!r}")
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown coefficient family {self.family!r}")
        m = int(self.m)
        vshape = {"matrix": (m, m), "scalar": (), "vector": (m,)}[self.kind]
        default_shape = {"matrix": np.eye(m), "scalar": np.ones(()),
                         "vector": np.ones(m)}[self.kind]
        base = np.broadcast_to(np.asarray(self.base, dtype=float), vshape)
        shape = default_shape if self.shape is None else self.shape
        shape = np.broadcast_to(np.asarray(shape, dtype=float), vshape)
        slope_v = np.zeros(m) if self.slope_v is None else self.slope_v
        k_v = np.zeros(m) if self.k_v is None else self.k_v
        for name, arr in (("base", base), ("shape", shape)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"coefficient {name} must be finite")
        object.__setattr__(self, "base", _ro(base))
        object.__setattr__(self, "shape", _ro(shape))
        object.__setattr__(self, "slope_v", _ro(np.broadcast_to(slope_v, (m,))))
        object.__setattr__(self, "k_v", _ro(np.broadcast_to(k_v, (m,))))

    @property
    def value_shape(self):
        return self.base.shape

    def _phase_arg(self, t, v):
        return v @ self.k_v + self.omega * t + self.phase

    def modulation(self, t, v):
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.family == "constant":
            return np.zeros(np.broadcast_shapes(t.shape, v.shape[:-1]))
        if self.family == "affine":
            return self.slope_t * t + v @ self.slope_v
        return self.amp * np.sin(self._phase_arg(t, v))

    def _expand(self, s):
        s = np.asarray(s)[(...,) + (None,) * self.base.ndim]
        return self.base + s * self.shape

    def __call__(self, t, v):
        return self._expand(self.modulation(t, v))

    def dt(self, t, v):
        """Exact time derivative of the handle."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.family == "constant":
            s = np.zeros(np.broadcast_shapes(t.shape, v.shape[:-1]))
        elif self.family == "affine":
            s = np.full(np.broadcast_shapes(t.shape, v.shape[:-1]), self.slope_t)
        else:
            s = self.amp * self.omega * np.cos(self._phase_arg(t, v))
        return np.asarray(s)[(...,) + (None,) * self.base.ndim] * self.shape

    def dv(self, t, v):
        """Exact v-gradient; shape S + value_shape + (m,)."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        S = np.broadcast_shapes(t.shape, v.shape[:-1])
        if self.family == "constant":
            gs = np.zeros(S + (self.m,))
        elif self.family == "affine":
            gs = np.broadcast_to(self.slope_v, S + (self.m,))
        else:
            gs = (self.amp * np.cos(self._phase_arg(t, v)))[..., None] * self.k_v
        lead = (...,) + (None,) * self.base.ndim + (slice(None),)
        return gs[lead] * self.shape[..., None]

    def is_time_independent(self) -> bool:
        if self.family == "constant":
            return True
        if self.family == "affine":
            return self.slope_t == 0.0
        return self.omega == 0.0 or self.amp == 0.0

    def to_dict(self) -> dict:
        out = {"family": self.family, "base": self.base.tolist()}
        if not np.array_equal(self.shape, {"matrix": np.eye(self.m),
                                           "scalar": np.ones(()),
                                           "vector": np.ones(self.m)}[self.kind]):
            out["shape"] = self.shape.tolist()
        if self.family == "affine":
            out["slope_t"] = self.slope_t
            out["slope_v"] = self.slope_v.tolist()
        elif self.family == "sinusoidal":
            out.update(amp=self.amp, k_v=self.k_v.tolist(), omega=self.omega,
                       phase=self.phase)
        return out

    @classmethod
    def from_dict(cls, kind: str, m: int, data: dict) -> "Coefficient":
        data = dict(data)
        family = data.pop("family", "constant")
        base = data.pop("base")
        return cls(kind=kind, m=m, base=base, family=family, **data)


def constant_diffusion(m: int, value=1.0) -> Coefficient:
    base = np.asarray(value, dtype=float)
    if base.ndim == 0:
        base = base * np.eye(m)
    return Coefficient("matrix", m, base)


def zero_scalar(m: int) -> Coefficient:
    return Coefficient("scalar", m, 0.0)


def zero_vector(m: int) -> Coefficient:
    return Coefficient("vector", m, np.zeros(m))
