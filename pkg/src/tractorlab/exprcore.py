"""Symbolic scalar expressions over the coordinates of a chart.

Expressions are immutable trees.  Constants are exact rationals; numeric
evaluation is done in binary64.  Opaque functions (``s(y1,z1)``) carry their
argument list, so differentiating with respect to a coordinate they do not
list gives zero structurally.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Sym", "Func", "Add", "Mul", "Pow", "Neg", "Exp", "Div",
    "Chart", "ExprSyntaxError", "UnknownSymbolError", "EvaluationError",
    "MissingBindingError", "as_expr", "parse_expr", "differentiate", "simplify",
    "expand", "evaluate", "to_source", "free_coordinates", "compile_exprs",
    "JetEvaluator", "ZERO", "ONE",
]


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownSymbolError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown symbol {self.name!r}"


class EvaluationError(ArithmeticError):
    pass


class MissingBindingError(EvaluationError):
    pass


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Neg(as_expr(other))))

    def __rsub__(self, other):
        return Add((as_expr(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer exponents are supported")
        return Pow(self, k)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_source(self)

    def leaves(self) -> int:
        """Number of leaves; an integer exponent counts as a leaf."""
        return sum(c.leaves() for c in self.children()) + (1 if isinstance(self, Pow) else 0)

    def children(self) -> tuple:
        return ()


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    def leaves(self):
        return 1


@dataclass(frozen=True, eq=True)
class Sym(Expr):
    name: str

    def leaves(self):
        return 1


@dataclass(frozen=True, eq=True)
class Func(Expr):
    """Opaque function of listed coordinates; ``partials`` are sorted argument slots."""

    name: str
    args: tuple
    partials: tuple = ()

    def leaves(self):
        return 1


@dataclass(frozen=True, eq=True)
class Add(Expr):
    terms: tuple

    def children(self):
        return self.terms


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    factors: tuple

    def children(self):
        return self.factors


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Exp(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    num: Expr
    den: Expr

    def children(self):
        return (self.num, self.den)


def _cache_hash(cls):
    orig = cls.__hash__

    def __hash__(self):
        h = self.__dict__.get("_h")
        if h is None:
            h = orig(self)
            object.__setattr__(self, "_h", h)
        return h

    cls.__hash__ = __hash__
    return cls


for _cls in (Const, Sym, Func, Add, Mul, Pow, Neg, Exp, Div):
    _cache_hash(_cls)

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction, np.integer)):
        return Const(Fraction(int(x)) if isinstance(x, np.integer) else Fraction(x))
    if isinstance(x, (float, np.floating)):
        return Const(Fraction(float(x)))
    if isinstance(x, str):
        raise TypeError("use parse_expr for strings")
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


# ---------------------------------------------------------------------------
# chart


@dataclass(frozen=True)
class Chart:
    names: tuple
    bounds: dict | None = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        for nm in names:
            if not _IDENT.fullmatch(nm) or nm == "exp":
                raise ValueError(f"bad coordinate name {nm!r}")
        if self.bounds is not None:
            for nm in self.bounds:
                if nm not in names:
                    raise UnknownSymbolError(nm)

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownSymbolError(name) from None

    def box(self, default=(-0.5, 0.5)) -> np.ndarray:
        b = self.bounds or {}
        return np.array([b.get(nm, default) for nm in self.names], dtype=float)

    def with_bounds(self, bounds: Mapping[str, tuple]) -> "Chart":
        merged = dict(self.bounds or {})
        merged.update({k: tuple(map(float, v)) for k, v in bounds.items()})
        return Chart(self.names, merged)

    def point(self, values: Sequence[float]) -> dict:
        if len(values) != self.dim:
            raise ValueError(f"point has {len(values)} coordinates, chart has {self.dim}")
        return dict(zip(self.names, map(float, values)))

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        box = self.box()
        lo = box[:, 0] + margin * (box[:, 1] - box[:, 0])
        hi = box[:, 1] - margin * (box[:, 1] - box[:, 0])
        return rng.uniform(lo, hi, size=(count, self.dim))

    def contains(self, x, tol: float = 1e-12) -> bool:
        if self.bounds is None:
            return True
        box = self.box(default=(-np.inf, np.inf))
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= box[:, 0] - tol) and np.all(x <= box[:, 1] + tol))


# ---------------------------------------------------------------------------
# parser

_IDENT = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*")
_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)|(?P<op>[-+*/^(),]))")
_DERIV_NAME = re.compile(r"(?P<base>[a-zA-Z][a-zA-Z0-9_]*?)__d(?P<slots>\d+(?:_\d+)*)")


def _tokenize(source: str):
    pos = 0
    out = []
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(source)))
    return out


class _Parser:
    def __init__(self, source: str, chart: Chart):
        self.toks = _tokenize(source)
        self.i = 0
        self.chart = chart

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value or t[0] == "end":
            raise ExprSyntaxError(f"expected {value!r}", t[2])
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError(f"unexpected {t[1]!r}", t[2])
        return e

    def expr(self):
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            f = self.factor()
            if op == "*":
                e = Mul(e.factors + (f,)) if isinstance(e, Mul) else Mul((e, f))
            else:
                e = Div(e, f)
        return e

    def factor(self):
        b = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            t = self.take()
            if t[0] != "num" or not t[1].isdigit():
                raise ExprSyntaxError("expected integer exponent", t[2])
            return Pow(b, int(t[1]))
        return b

    def base(self):
        t = self.take()
        kind, text, pos = t
        if kind == "num":
            return Const(Fraction(text))
        if kind == "op" and text == "-":
            return Neg(self.base())
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            if text == "exp":
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Exp(e)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                self.take()
                args = [self._coord_arg()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self._coord_arg())
                self.expect(")")
                name, partials = text, ()
                m = _DERIV_NAME.fullmatch(text)
                if m:
                    name = m.group("base")
                    partials = tuple(sorted(int(s) for s in m.group("slots").split("_")))
                    if any(s >= len(args) for s in partials):
                        raise ExprSyntaxError(f"derivative slot out of range in {text!r}", pos)
                return Func(name, tuple(args), partials)
            if text not in self.chart.names:
                raise UnknownSymbolError(text)
            return Sym(text)
        raise ExprSyntaxError(f"unexpected {text!r}" if text else "unexpected end of input", pos)

    def _coord_arg(self):
        kind, text, pos = self.take()
        if kind != "ident":
            raise ExprSyntaxError("expected coordinate name", pos)
        if text not in self.chart.names:
            raise UnknownSymbolError(text)
        return text


def parse_expr(source: str, chart: Chart) -> Expr:
    """Parse ``source`` in the metric-definition grammar against ``chart``."""
    return _Parser(source, chart).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {Add: 1, Neg: 2, Mul: 3, Div: 3, Pow: 4}


def _fmt_const(v: Fraction) -> str:
    if v.denominator == 1:
        s = str(v.numerator)
    else:
        s = f"{v.numerator}/{v.denominator}"
    return s if v >= 0 and v.denominator == 1 else f"({s})"


def to_source(e: Expr) -> str:
    """Render ``e`` in the parser's grammar (round-trips through parse_expr)."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Func):
        name = e.name
        if e.partials:
            name += "__d" + "_".join(map(str, e.partials))
        return f"{name}({','.join(e.args)})"
    if isinstance(e, Add):
        if not e.terms:
            return "0"
        out = _wrap(e.terms[0], 1)
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                out += " - " + _wrap(t.arg, 2)
            else:
                out += " + " + _wrap(t, 1)
        return out
    if isinstance(e, Mul):
        if not e.factors:
            return "1"
        return "*".join(_wrap(f, 3) for f in e.factors)
    if isinstance(e, Div):
        return f"{_wrap(e.num, 3)}/{_wrap(e.den, 4)}"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"1/{_wrap(e.base, 4)}^{-e.exponent}"
        return f"{_wrap(e.base, 5)}^{e.exponent}"
    if isinstance(e, Neg):
        # unary minus binds tighter than '^' in the grammar: -x^2 reads as (-x)^2
        return "-" + _wrap(e.arg, 5)
    if isinstance(e, Exp):
        return f"exp({to_source(e.arg)})"
    raise TypeError(type(e))


def _wrap(e: Expr, prec: int) -> str:
    s = to_source(e)
    p = _PREC.get(type(e), 9)
    if isinstance(e, Pow) and e.exponent < 0:
        p = 3
    return f"({s})" if p < prec else s


# ---------------------------------------------------------------------------
# smart constructors used by differentiate (light, local folding only)


def _add(*terms: Expr) -> Expr:
    flat = []
    c = Fraction(0)
    for t in terms:
        if isinstance(t, Const):
            c += t.value
        elif isinstance(t, Add):
            for s in t.terms:
                if isinstance(s, Const):
                    c += s.value
                else:
                    flat.append(s)
        else:
            flat.append(t)
    if c != 0:
        flat.append(Const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def _mul(*factors: Expr) -> Expr:
    flat = []
    c = Fraction(1)
    for f in factors:
        if isinstance(f, Const):
            c *= f.value
        elif isinstance(f, Mul):
            for s in f.factors:
                if isinstance(s, Const):
                    c *= s.value
                else:
                    flat.append(s)
        elif isinstance(f, Neg):
            c = -c
            flat.append(f.arg)
        else:
            flat.append(f)
        if c == 0:
            return ZERO
    if not flat:
        return Const(c)
    if c != 1:
        flat.insert(0, Const(c))
    if len(flat) == 1:
        return flat[0]
    return Mul(tuple(flat))


def _neg(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Neg):
        return e.arg
    return _mul(Const(Fraction(-1)), e)


def _pow(b: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return b
    if isinstance(b, Const):
        if b.value == 0 and k < 0:
            return Pow(b, k)
        return Const(b.value ** k)
    return Pow(b, k)


def _div(n: Expr, d: Expr) -> Expr:
    if isinstance(n, Const) and n.value == 0:
        return ZERO
    if isinstance(d, Const) and d.value != 0:
        return _mul(Const(1 / d.value), n)
    return Div(n, d)


# ---------------------------------------------------------------------------
# differentiation


@lru_cache(maxsize=200_000)
def differentiate(e: Expr, coord: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``coord``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == coord else ZERO
    if isinstance(e, Func):
        terms = [
            Func(e.name, e.args, tuple(sorted(e.partials + (i,))))
            for i, a in enumerate(e.args) if a == coord
        ]
        return _add(*terms) if terms else ZERO
    if isinstance(e, Add):
        return _add(*(differentiate(t, coord) for t in e.terms))
    if isinstance(e, Mul):
        out = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = differentiate(f, coord)
            if df == ZERO:
                continue
            out.append(_mul(*fs[:i], df, *fs[i + 1:]))
        return _add(*out)
    if isinstance(e, Pow):
        db = differentiate(e.base, coord)
        if db == ZERO:
            return ZERO
        return _mul(Const(e.exponent), _pow(e.base, e.exponent - 1), db)
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, coord))
    if isinstance(e, Exp):
        da = differentiate(e.arg, coord)
        return ZERO if da == ZERO else _mul(e, da)
    if isinstance(e, Div):
        dn = differentiate(e.num, coord)
        dd = differentiate(e.den, coord)
        if dd == ZERO:
            return _div(dn, e.den)
        return _div(_add(_mul(dn, e.den), _neg(_mul(e.num, dd))), _pow(e.den, 2))
    raise TypeError(type(e))


def free_coordinates(e: Expr) -> frozenset:
    """Coordinates the expression may depend on (opaque-function args included)."""
    if isinstance(e, Sym):
        return frozenset((e.name,))
    if isinstance(e, Func):
        return frozenset(e.args)
    out = frozenset()
    for c in e.children():
        out |= free_coordinates(c)
    return out


# ---------------------------------------------------------------------------
# simplification: flatten, fold constants, drop 0/1, collect identical terms


@lru_cache(maxsize=200_000)
def _key(e: Expr) -> str:
    return to_source(e)


def _split_coeff(t: Expr):
    if isinstance(t, Const):
        return t.value, ONE
    if isinstance(t, Mul) and t.factors and isinstance(t.factors[0], Const):
        rest = t.factors[1:]
        return t.factors[0].value, (rest[0] if len(rest) == 1 else Mul(rest))
    return Fraction(1), t


def _split_power(f: Expr):
    if isinstance(f, Pow):
        return f.base, f.exponent
    return f, 1


@lru_cache(maxsize=100_000)
def simplify(e: Expr) -> Expr:
    if isinstance(e, (Const, Sym, Func)):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        return _simplify_mul([Const(Fraction(-1)), a])
    if isinstance(e, Add):
        return _simplify_add([simplify(t) for t in e.terms])
    if isinstance(e, Mul):
        return _simplify_mul([simplify(f) for f in e.factors])
    if isinstance(e, Pow):
        return _simplify_pow(simplify(e.base), e.exponent)
    if isinstance(e, Exp):
        a = simplify(e.arg)
        if isinstance(a, Const) and a.value == 0:
            return ONE
        return Exp(a)
    if isinstance(e, Div):
        n, d = simplify(e.num), simplify(e.den)
        if isinstance(n, Const) and n.value == 0:
            return ZERO
        if isinstance(d, Const) and d.value != 0:
            return _simplify_mul([Const(1 / d.value), n])
        if n == d:
            return ONE
        return Div(n, d)
    raise TypeError(type(e))


def _simplify_add(terms):
    flat = []
    for t in terms:
        flat.extend(t.terms if isinstance(t, Add) else [t])
    coeffs: dict = {}
    for t in flat:
        c, rest = _split_coeff(t)
        k = _key(rest)
        if k in coeffs:
            coeffs[k][0] += c
        else:
            coeffs[k] = [c, rest]
    out = []
    for k in sorted(coeffs):
        c, rest = coeffs[k]
        if c == 0:
            continue
        out.append(_simplify_mul([Const(c), rest]))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Add(tuple(out))


def _simplify_mul(factors):
    flat = []
    for f in factors:
        flat.extend(f.factors if isinstance(f, Mul) else [f])
    c = Fraction(1)
    powers: dict = {}
    for f in flat:
        if isinstance(f, Const):
            c *= f.value
            continue
        b, k = _split_power(f)
        key = _key(b)
        if key in powers:
            powers[key][1] += k
        else:
            powers[key] = [b, k]
    if c == 0:
        return ZERO
    out = []
    for key in sorted(powers):
        b, k = powers[key]
        p = _simplify_pow(b, k)
        if isinstance(p, Const):
            c *= p.value
        elif isinstance(p, Mul):
            for s in p.factors:
                if isinstance(s, Const):
                    c *= s.value
                else:
                    out.append(s)
        else:
            out.append(p)
    if c != 1 or not out:
        out.insert(0, Const(c))
    if len(out) == 1:
        return out[0]
    return Mul(tuple(out))


def _simplify_pow(b: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return b
    if isinstance(b, Const):
        if b.value == 0 and k < 0:
            return Pow(b, k)
        return Const(b.value ** k)
    if isinstance(b, Pow):
        return _simplify_pow(b.base, b.exponent * k)
    return Pow(b, k)


# ---------------------------------------------------------------------------
# expansion into a sum of monomials over atoms (polynomial normal form)
#
# Atoms are coordinate symbols, opaque functions, exp(.) of an expanded
# argument, and non-monomial denominators (which then carry negative powers).
# Two polynomial expressions are equal iff their expansions are identical.


def _poly_const(c: Fraction) -> dict:
    return {(): c} if c != 0 else {}


def _poly_atom(atom: Expr, k: int = 1) -> dict:
    return {((_key(atom), atom, k),): Fraction(1)}


def _mono_mul(a: tuple, b: tuple) -> tuple:
    d = {key: [atom, k] for key, atom, k in a}
    for key, atom, k in b:
        if key in d:
            d[key][1] += k
        else:
            d[key] = [atom, k]
    return tuple((key, d[key][0], d[key][1]) for key in sorted(d) if d[key][1] != 0)


def _poly_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, 0) + c
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v
    return out


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = _mono_mul(ma, mb)
            v = out.get(m, 0) + ca * cb
            if v == 0:
                out.pop(m, None)
            else:
                out[m] = v
    return out


def _poly_scale(a: dict, c: Fraction) -> dict:
    if c == 0:
        return {}
    return {m: v * c for m, v in a.items()}


def _poly_pow(a: dict, k: int) -> dict:
    if k < 0:
        if len(a) == 1:
            (m, c), = a.items()
            return _poly_pow({tuple((key, atom, -p) for key, atom, p in m): 1 / c}, -k)
        if not a:
            raise ZeroDivisionError("expansion of a negative power of zero")
        return _poly_atom(_poly_to_expr(a), k)
    out = _poly_const(Fraction(1))
    for _ in range(k):
        out = _poly_mul(out, a)
    return out


def _poly_to_expr(p: dict) -> Expr:
    if not p:
        return ZERO
    terms = []
    for m in sorted(p, key=lambda m: tuple((key, k) for key, _, k in m)):
        c = p[m]
        factors = [a if k == 1 else Pow(a, k) for _, a, k in m]
        if c != 1 or not factors:
            factors.insert(0, Const(c))
        terms.append(factors[0] if len(factors) == 1 else Mul(tuple(factors)))
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


@lru_cache(maxsize=100_000)
def _expand_poly(e: Expr):
    if isinstance(e, Const):
        return _poly_const(e.value)
    if isinstance(e, (Sym, Func)):
        return _poly_atom(e)
    if isinstance(e, Add):
        out: dict = {}
        for t in e.terms:
            out = _poly_add(out, _expand_poly(t))
        return out
    if isinstance(e, Mul):
        out = _poly_const(Fraction(1))
        for f in e.factors:
            out = _poly_mul(out, _expand_poly(f))
            if not out:
                return {}
        return out
    if isinstance(e, Neg):
        return _poly_scale(_expand_poly(e.arg), Fraction(-1))
    if isinstance(e, Pow):
        return _poly_pow(_expand_poly(e.base), e.exponent)
    if isinstance(e, Exp):
        inner = _expand_poly(e.arg)
        if not inner:
            return _poly_const(Fraction(1))
        return _poly_atom(Exp(_poly_to_expr(inner)))
    if isinstance(e, Div):
        return _poly_mul(_expand_poly(e.num), _poly_pow(_expand_poly(e.den), -1))
    raise TypeError(type(e))


def expand(e: Expr) -> Expr:
    """Polynomial normal form (sum of rational multiples of atom monomials)."""
    return _poly_to_expr(_expand_poly(e))


def is_monomial(e: Expr) -> bool:
    return len(_expand_poly(e)) == 1


def is_zero(e: Expr) -> bool:
    return not _expand_poly(e)


# ---------------------------------------------------------------------------
# evaluation

Bindings = Mapping[str, Callable]


def evaluate(e: Expr, point: Mapping[str, float], bindings: Bindings | None = None) -> float:
    """Evaluate ``e`` at ``point`` (coordinate name -> value).

    ``bindings`` maps opaque-function names to ``f(args, partials) -> float``
    where ``partials`` is the sorted tuple of differentiated argument slots.
    """
    bindings = bindings or {}
    return _eval(e, point, bindings)


def _eval(e, point, bindings):
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return float(point[e.name])
        except KeyError:
            raise UnknownSymbolError(e.name) from None
    if isinstance(e, Func):
        f = bindings.get(e.name)
        if f is None:
            raise MissingBindingError(f"no numeric binding for opaque function {e.name!r}")
        return float(f(tuple(float(point[a]) for a in e.args), e.partials))
    if isinstance(e, Add):
        return math.fsum(_eval(t, point, bindings) for t in e.terms)
    if isinstance(e, Mul):
        v = 1.0
        for f in e.factors:
            v *= _eval(f, point, bindings)
        return v
    if isinstance(e, Neg):
        return -_eval(e.arg, point, bindings)
    if isinstance(e, Pow):
        b = _eval(e.base, point, bindings)
        if b == 0 and e.exponent < 0:
            raise EvaluationError(f"division by zero in {to_source(e)}")
        return b ** e.exponent
    if isinstance(e, Exp):
        return math.exp(_eval(e.arg, point, bindings))
    if isinstance(e, Div):
        d = _eval(e.den, point, bindings)
        if d == 0:
            raise EvaluationError(f"division by zero: denominator {to_source(e.den)} vanishes")
        return _eval(e.num, point, bindings) / d
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# compilation to python closures (used on every hot numeric path)


def _py(e: Expr, index: dict) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Sym):
        return f"x[{index[e.name]}]"
    if isinstance(e, Func):
        args = ", ".join(f"x[{index[a]}]" for a in e.args)
        return f"_b[{e.name!r}](({args},), {e.partials!r})"
    if isinstance(e, Add):
        return "(" + " + ".join(_py(t, index) for t in e.terms) + ")" if e.terms else "0.0"
    if isinstance(e, Mul):
        return "(" + " * ".join(_py(f, index) for f in e.factors) + ")" if e.factors else "1.0"
    if isinstance(e, Neg):
        return f"(-{_py(e.arg, index)})"
    if isinstance(e, Pow):
        return f"({_py(e.base, index)} ** {e.exponent})"
    if isinstance(e, Exp):
        return f"_exp({_py(e.arg, index)})"
    if isinstance(e, Div):
        return f"({_py(e.num, index)} / {_py(e.den, index)})"
    raise TypeError(type(e))


class _Bindings(dict):
    def __missing__(self, name):
        raise MissingBindingError(f"no numeric binding for opaque function {name!r}")


def compile_exprs(exprs: Sequence[Expr], chart: Chart, bindings: Bindings | None = None):
    """Compile a flat list of expressions into ``f(x: ndarray) -> ndarray``."""
    index = {nm: i for i, nm in enumerate(chart.names)}
    for e in exprs:
        missing = free_coordinates(e) - set(index)
        if missing:
            raise UnknownSymbolError(sorted(missing)[0])
    body = ", ".join(_py(e, index) for e in exprs)
    src = f"def _f(x):\n    return [{body}]\n"
    ns = {"_exp": math.exp, "_b": _Bindings(bindings or {})}
    exec(compile(src, "<tractorlab-compiled>", "exec"), ns)
    inner = ns["_f"]

    def f(x):
        try:
            return np.array(inner(x), dtype=float)
        except ZeroDivisionError:
            raise EvaluationError(f"division by zero while evaluating at {list(map(float, x))}") from None

    return f


class JetEvaluator:
    """Value, gradient and Hessian of an array of expressions at a point."""

    def __init__(self, exprs, chart: Chart, bindings: Bindings | None = None, order: int = 2):
        arr = np.empty(np.shape(exprs) if not isinstance(exprs, Expr) else (), dtype=object)
        arr[...] = exprs if not isinstance(exprs, Expr) else exprs
        self.shape = arr.shape
        self.chart = chart
        self.order = order
        flat = [as_expr(e) for e in arr.ravel()]
        n = chart.dim
        names = chart.names
        table = list(flat)
        if order >= 1:
            d1 = [[differentiate(e, names[k]) for k in range(n)] for e in flat]
            table += [d for row in d1 for d in row]
        if order >= 2:
            for row in d1:
                for k in range(n):
                    for l in range(k, n):
                        table.append(differentiate(row[k], names[l]))
        self._size = len(flat)
        self._table = table
        self._bindings = bindings
        self._fns: dict = {}

    def _fn_for(self, order: int):
        fn = self._fns.get(order)
        if fn is None:
            s, n = self._size, self.chart.dim
            count = s * (1, 1 + n, 1 + n + n * (n + 1) // 2)[order]
            fn = compile_exprs(self._table[:count], self.chart, self._bindings)
            self._fns[order] = fn
        return fn

    def __call__(self, x, order: int | None = None):
        from .jets import Jet

        order = self.order if order is None else min(order, self.order)
        x = np.asarray(x, dtype=float)
        vals = self._fn_for(order)(x)
        n, s = self.chart.dim, self._size
        v = vals[:s].reshape(self.shape)
        d = h = None
        if order >= 1:
            d = vals[s:s + s * n].reshape(self.shape + (n,))
        if order >= 2:
            tri = vals[s + s * n:].reshape(s, -1)
            h = np.empty((s, n, n))
            iu = np.triu_indices(n)
            h[:, iu[0], iu[1]] = tri
            h[:, iu[1], iu[0]] = tri
            h = h.reshape(self.shape + (n, n))
        return Jet(v, d, h)
