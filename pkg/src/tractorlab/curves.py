"""Parametrized curves on [0, 1] and a fixed-step RK4 driver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class Piece:
    t0: float
    t1: float
    position: Callable
    velocity: Callable


class Curve:
    """Piecewise-smooth curve; velocities are taken with respect to the global t."""

    def __init__(self, pieces, label: str = "curve"):
        self.pieces = list(pieces)
        self.label = label
        if abs(self.pieces[0].t0) > 1e-15 or abs(self.pieces[-1].t1 - 1.0) > 1e-12:
            raise ValueError("curve must be parametrized over [0, 1]")

    @classmethod
    def smooth(cls, position, velocity, label="curve"):
        return cls([Piece(0.0, 1.0, position, velocity)], label)

    def position(self, t: float) -> np.ndarray:
        for p in self.pieces:
            if t <= p.t1 + 1e-15:
                return np.asarray(p.position(t), dtype=float)
        return np.asarray(self.pieces[-1].position(t), dtype=float)

    @property
    def start(self):
        return self.position(0.0)

    @property
    def end(self):
        return self.position(1.0)

    def is_closed(self, tol=1e-12) -> bool:
        return bool(np.linalg.norm(self.start - self.end) < tol)


def polyline(vertices, label: str = "polyline") -> Curve:
    """Piecewise-linear curve through ``vertices``, equal parameter time per segment."""
    vs = [np.asarray(v, dtype=float) for v in vertices]
    m = len(vs) - 1
    if m < 1:
        raise ValueError("polyline needs at least two vertices")
    pieces = []
    for i in range(m):
        a, b = vs[i], vs[i + 1]
        t0, t1 = i / m, (i + 1) / m
        pieces.append(Piece(
            t0, t1,
            (lambda t, a=a, b=b, t0=t0: a + (t - t0) * m * (b - a)),
            (lambda t, a=a, b=b: m * (b - a)),
        ))
    return Curve(pieces, label)


def rectangle_loop(base, i: int, j: int, eps: float = 0.1) -> Curve:
    base = np.asarray(base, dtype=float)
    ei = np.zeros_like(base)
    ej = np.zeros_like(base)
    ei[i] = eps
    ej[j] = eps
    return polyline([base, base + ei, base + ei + ej, base + ej, base], label=f"rect[{i},{j}]")


def straight_line(start, direction, label="line") -> Curve:
    start = np.asarray(start, dtype=float)
    direction = np.asarray(direction, dtype=float)
    return Curve.smooth(lambda t: start + t * direction, lambda t: direction, label)


def rk4(curve: Curve, rhs, y0, step: float = DEFAULT_STEP, check=None):
    """Integrate ``y' = rhs(x(t), x'(t), y)`` along ``curve`` from t=0 to t=1.

    Each smooth piece is integrated separately so no RK stage straddles a kink.
    ``check(x)`` is called at every step start and may raise.
    """
    y = np.array(y0, dtype=float)
    for p in curve.pieces:
        span = p.t1 - p.t0
        steps = max(1, int(round(span / step)))
        h = span / steps
        for s in range(steps):
            t = p.t0 + s * h
            x0 = p.position(t)
            if check is not None:
                check(x0)
            xm = p.position(t + h / 2)
            x1 = p.position(t + h)
            v0, vm, v1 = p.velocity(t), p.velocity(t + h / 2), p.velocity(t + h)
            k1 = rhs(x0, v0, y)
            k2 = rhs(xm, vm, y + h / 2 * k1)
            k3 = rhs(xm, vm, y + h / 2 * k2)
            k4 = rhs(x1, v1, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def linear_rk4(curve: Curve, generator, y0, step: float = DEFAULT_STEP, check=None):
    """Integrate ``y' = -A(x, x') y`` where ``generator(x, v)`` returns A.

    Each distinct stage point is evaluated once (the midpoint is shared by two stages).
    """
    y = np.array(y0, dtype=float)
    for p in curve.pieces:
        span = p.t1 - p.t0
        steps = max(1, int(round(span / step)))
        h = span / steps
        a_next = None
        for s in range(steps):
            t = p.t0 + s * h
            x0 = p.position(t)
            if check is not None:
                check(x0)
            a0 = a_next if a_next is not None else generator(x0, p.velocity(t))
            am = generator(p.position(t + h / 2), p.velocity(t + h / 2))
            a1 = generator(p.position(t + h), p.velocity(t + h))
            k1 = -a0 @ y
            k2 = -am @ (y + h / 2 * k1)
            k3 = -am @ (y + h / 2 * k2)
            k4 = -a1 @ (y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            a_next = a1
    return y
