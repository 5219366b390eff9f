"""Plain report records shared by every sampled check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CheckReport:
    check: str
    samples: int
    tolerance: float
    max_residual: float = 0.0
    failures: list = field(default_factory=list)
    singular_points: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        evaluated = self.samples - len(self.singular_points)
        return evaluated > 0 and not self.failures and self.max_residual < self.tolerance

    def record(self, point, residual: float):
        residual = float(residual)
        if not np.isfinite(residual):
            residual = float("inf")
        self.max_residual = max(self.max_residual, residual)
        if residual >= self.tolerance:
            self.failures.append((_plain(point), residual))

    def singular(self, point, reason: str = ""):
        self.singular_points.append({"point": _plain(point), "reason": reason})

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "max_residual": self.max_residual,
            "failures": [{"point": p, "residual": r} for p, r in self.failures],
            "singular_points": self.singular_points,
            "details": _plain(self.details),
        }

    def __bool__(self):
        return self.passed


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x
