"""Built-in drift pairs and operators: heat, L1, jerk and example1(n)."""

from __future__ import annotations

import numpy as np

from .coefficients import Coefficient, constant_diffusion
from .errors import ValidationError
from .linalg_core import DriftPair
from .operator_model import OperatorSpec

PRESETS = ("heat", "L1", "jerk", "example1")
DEFAULT_LAMBDA = 1.1


def heat_drift() -> DriftPair:
    return DriftPair(np.zeros((1, 1)), np.zeros((1, 1)))


def l1_drift() -> DriftPair:
    return DriftPair(np.array([[1.0], [0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]))


def jerk_drift() -> DriftPair:
    """Chain J -> acceleration -> velocity -> position (reversed-time signs)."""
    B1 = np.array([[-1.0], [0.0], [0.0]])
    B2 = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return DriftPair(B1, B2)


def example1_drift(n: int) -> DriftPair:
    """B1 = e1; B2 = I plus ones on the subdiagonal and at (0, n-1)."""
    if n < 2:
        raise ValidationError("example1 needs n >= 2")
    B1 = np.zeros((n, 1))
    B1[0, 0] = 1.0
    B2 = np.eye(n) + np.eye(n, k=-1)
    B2[0, n - 1] = 1.0
    return DriftPair(B1, B2)


def drift_preset(name: str, n: int = 3) -> DriftPair:
    if name == "heat":
        return heat_drift()
    if name == "L1":
        return l1_drift()
    if name == "jerk":
        return jerk_drift()
    if name == "example1":
        return example1_drift(n)
    raise ValidationError(f"unknown preset {name!r}; expected one of {PRESETS}")


def variable_diffusion(m: int, amp: float = 0.03, omega: float = 5.0,
                       k: float = 1.0) -> Coefficient:
    """A = (1 + amp sin(k v_1 + omega t)) I, smooth and uniformly elliptic."""
    kv = np.zeros(m)
    kv[0] = k
    return Coefficient("matrix", m, np.eye(m), family="sinusoidal", amp=amp,
                       k_v=kv, omega=omega)


def operator_preset(name: str, n: int = 3, lam: float = DEFAULT_LAMBDA,
                    variable: bool = False) -> OperatorSpec:
    """OperatorSpec for a preset with constant (or mildly varying) A."""
    d = drift_preset(name, n)
    A = variable_diffusion(d.m) if variable else constant_diffusion(d.m, 1.0)
    return OperatorSpec(d, A, lam=lam, name=name + ("-var" if variable else ""))
