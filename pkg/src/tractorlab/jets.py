"""Second-order jets of array-valued functions of the chart coordinates.

A ``Jet`` holds a value array ``v`` of shape S, its first partials ``d`` of
shape S+(n,) and its second partials ``h`` of shape S+(n, n).  Products are
formed with :func:`jeinsum`, which applies the Leibniz rule to an einsum.
Order drops by one under :meth:`Jet.grad`; results are truncated to the
lowest order among the operands.
"""

from __future__ import annotations

import numpy as np

_RESERVED = "YZ"


class Jet:
    __slots__ = ("v", "d", "h")

    def __init__(self, v, d=None, h=None):
        self.v = np.asarray(v, dtype=float)
        self.d = None if d is None else np.asarray(d, dtype=float)
        self.h = None if (h is None or d is None) else np.asarray(h, dtype=float)

    @property
    def order(self) -> int:
        return 0 if self.d is None else (1 if self.h is None else 2)

    @property
    def shape(self):
        return self.v.shape

    @classmethod
    def const(cls, v, n: int, order: int = 2) -> "Jet":
        v = np.asarray(v, dtype=float)
        d = np.zeros(v.shape + (n,)) if order >= 1 else None
        h = np.zeros(v.shape + (n, n)) if order >= 2 else None
        return cls(v, d, h)

    @classmethod
    def variable(cls, x, order: int = 2) -> "Jet":
        """The coordinate functions themselves, as a jet of shape (n,)."""
        x = np.asarray(x, dtype=float)
        n = x.size
        return cls(x, np.eye(n) if order >= 1 else None, np.zeros((n, n, n)) if order >= 2 else None)

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.v, self.d if order >= 1 else None, self.h if order >= 2 else None)

    def grad(self) -> "Jet":
        """Jet of the partials; the derivative index is appended as the last value axis."""
        if self.d is None:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.d, self.h, None)

    def partial(self, k: int) -> "Jet":
        if self.d is None:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.d[..., k], None if self.h is None else self.h[..., k, :], None)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            raise IndexError("ellipsis indexing is not supported on jets")
        return Jet(self.v[idx], None if self.d is None else self.d[idx],
                   None if self.h is None else self.h[idx])

    def transpose(self, *axes) -> "Jet":
        k = len(axes)
        if self.d is None:
            return Jet(self.v.transpose(axes))
        d = self.d.transpose(tuple(axes) + (k,))
        h = None if self.h is None else self.h.transpose(tuple(axes) + (k, k + 1))
        return Jet(self.v.transpose(axes), d, h)

    def reshape(self, *shape) -> "Jet":
        tail = self.v.ndim
        d = None if self.d is None else self.d.reshape(shape + self.d.shape[tail:])
        h = None if self.h is None else self.h.reshape(shape + self.h.shape[tail:])
        return Jet(self.v.reshape(shape), d, h)

    def _binary_linear(self, other, sign):
        if not isinstance(other, Jet):
            return Jet(self.v + sign * np.asarray(other, dtype=float), self.d, self.h)
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        d = None if order < 1 else a.d + sign * b.d
        h = None if order < 2 else a.h + sign * b.h
        return Jet(a.v + sign * b.v, d, h)

    def __add__(self, other):
        return self._binary_linear(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary_linear(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet(-self.v, None if self.d is None else -self.d, None if self.h is None else -self.h)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if other.v.ndim == 0 or self.v.ndim == 0:
                return _scalar_mul(self, other)
            return jeinsum("...,...->...", self, other)
        c = np.asarray(other, dtype=float)
        if c.ndim == 0:
            return Jet(self.v * c, None if self.d is None else self.d * c,
                       None if self.h is None else self.h * c)
        return jeinsum("...,...->...", self, Jet(np.broadcast_to(c, self.v.shape)))

    __rmul__ = __mul__

    def apply(self, f, f1, f2) -> "Jet":
        """Elementwise ``f`` given callables for its first and second derivatives."""
        v = f(self.v)
        if self.d is None:
            return Jet(v)
        g1 = f1(self.v)
        d = g1[..., None] * self.d
        h = None
        if self.h is not None:
            g2 = f2(self.v)
            h = g2[..., None, None] * self.d[..., :, None] * self.d[..., None, :] + g1[..., None, None] * self.h
        return Jet(v, d, h)

    def exp(self) -> "Jet":
        return self.apply(np.exp, np.exp, np.exp)

    def sqrt(self) -> "Jet":
        return self.apply(np.sqrt, lambda x: 0.5 / np.sqrt(x), lambda x: -0.25 * x ** -1.5)

    def reciprocal(self) -> "Jet":
        return self.apply(lambda x: 1.0 / x, lambda x: -1.0 / x ** 2, lambda x: 2.0 / x ** 3)

    def inv(self) -> "Jet":
        """Matrix inverse of a square jet (value shape (m, m))."""
        ai = np.linalg.inv(self.v)
        if self.d is None:
            return Jet(ai)
        d = -np.einsum("ab,bcZ,cd->adZ", ai, self.d, ai)
        h = None
        if self.h is not None:
            h = -np.einsum("ab,bcYZ,cd->adYZ", ai, self.h, ai)
            t = np.einsum("ab,bcY,cd,deZ,ef->afYZ", ai, self.d, ai, self.d, ai)
            h = h + t + t.transpose(0, 1, 3, 2)
        return Jet(ai, d, h)


def _scalar_mul(a: Jet, b: Jet) -> Jet:
    if a.v.ndim != 0:
        a, b = b, a
    # a is scalar-valued
    order = min(a.order, b.order)
    a, b = a.truncate(order), b.truncate(order)
    nb = b.v.ndim
    v = a.v * b.v
    if order == 0:
        return Jet(v)
    d = a.v * b.d + b.v[..., None] * a.d.reshape((1,) * nb + a.d.shape)
    h = None
    if order == 2:
        ad = a.d.reshape((1,) * nb + a.d.shape)
        ah = a.h.reshape((1,) * nb + a.h.shape)
        h = (a.v * b.h + b.v[..., None, None] * ah
             + b.d[..., :, None] * ad[..., None, :] + ad[..., :, None] * b.d[..., None, :])
    return Jet(v, d, h)


def _as_jet(x) -> Jet:
    return x if isinstance(x, Jet) else Jet(np.asarray(x, dtype=float))


def jeinsum(spec: str, *operands) -> Jet:
    """Leibniz-rule einsum over jets (plain arrays are treated as constants)."""
    ins, out = spec.split("->")
    ins = ins.split(",")
    if len(ins) != len(operands):
        raise ValueError("operand count does not match spec")
    if any(c in _RESERVED for c in spec):
        raise ValueError(f"letters {_RESERVED} are reserved")
    ops = [_as_jet(o) for o in operands]
    variable = [i for i, o in enumerate(ops) if o.d is not None]
    order = min((ops[i].order for i in variable), default=0)
    vals = [o.v for o in ops]
    v = np.einsum(spec, *vals)
    if order == 0:
        return Jet(v)
    d = 0
    for i in variable:
        sub = list(ins)
        sub[i] += "Z"
        args = list(vals)
        args[i] = ops[i].d
        d = d + np.einsum(",".join(sub) + "->" + out + "Z", *args)
    h = None
    if order == 2:
        h = 0
        for i in variable:
            sub = list(ins)
            sub[i] += "YZ"
            args = list(vals)
            args[i] = ops[i].h
            h = h + np.einsum(",".join(sub) + "->" + out + "YZ", *args)
        for i in variable:
            for j in variable:
                if i == j:
                    continue
                sub = list(ins)
                sub[i] += "Y"
                sub[j] += "Z"
                args = list(vals)
                args[i] = ops[i].d
                args[j] = ops[j].d
                h = h + np.einsum(",".join(sub) + "->" + out + "YZ", *args)
    return Jet(v, d, h)


def stack(jets, axis: int = 0) -> Jet:
    order = min(j.order for j in jets)
    js = [j.truncate(order) for j in jets]
    v = np.stack([j.v for j in js], axis=axis)
    d = None if order < 1 else np.stack([j.d for j in js], axis=axis)
    h = None if order < 2 else np.stack([j.h for j in js], axis=axis)
    return Jet(v, d, h)
