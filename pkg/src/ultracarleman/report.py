"""Structured pass/fail records shared by every verifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

STATUSES = ("pass", "fail", "out-of-regime", "inconclusive",
            "hypothesis-violated", "degenerate-pass")


@dataclass
class VerificationReport:
    """Outcome of one numerical check.

    ``empirical_constant`` is arranged so that the underlying statement
    predicts it stays bounded; ``passed`` is true exactly when it is finite,
    at most ``ceiling``, and every precondition held.  ``status`` refines
    the boolean for gated or degenerate cases.
    """

    name: str
    lhs: float
    rhs: float
    empirical_constant: float
    ceiling: float
    passed: bool
    status: str
    suite: str = ""
    alpha: float | None = None
    seed: int | None = None
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    runtime_ms: float = 0.0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def sort_key(self):
        a = -math.inf if self.alpha is None else self.alpha
        s = -1 if self.seed is None else self.seed
        return (self.suite, a, s, self.name)

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "name": self.name,
            "suite": self.suite,
            "status": self.status,
            "pass": bool(self.passed),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "empirical_constant": self.empirical_constant,
            "ceiling": self.ceiling,
            "alpha": self.alpha,
            "seed": self.seed,
            "params": self.params,
            "grid": self.grid,
            "details": self.details,
        }
        if include_runtime:
            out["runtime_ms"] = self.runtime_ms
        return out


def make_report(name, lhs, rhs, constant, ceiling, *, preconditions_ok=True,
                status=None, **kw) -> VerificationReport:
    """Build a report, deriving ``passed``/``status`` from the constant."""
    constant = float(constant)
    ok = bool(preconditions_ok and math.isfinite(constant) and constant <= ceiling)
    if status is None:
        status = "pass" if ok else "fail"
    elif status != "pass":
        ok = ok and status == "degenerate-pass"
    return VerificationReport(name=name, lhs=float(lhs), rhs=float(rhs),
                              empirical_constant=constant, ceiling=float(ceiling),
                              passed=ok, status=status, **kw)
