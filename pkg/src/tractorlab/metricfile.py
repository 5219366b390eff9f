"""Line-oriented metric definition files.

Statements end with ``;`` and may span lines; ``#`` starts a comment.

    chart x1 x2 x3 ;
    signature 0 3 ;
    g 1 1 = 4/(1+x1^2+x2^2+x3^2)^2 ;      # indices are 1-based or coordinate names
    bounds x1 -0.5 0.5 ;
    walker 1 A(1,1)=1 B(1,1)=u1^2 ;       # block normal form on the declared chart
    pure_walker 2 split g(1,1)=y2^2 g(2,2)=y1^2 ;
    spinor 1, 0, 0, 0 ;                   # constant or expression components
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from . import exprcore as ec
from .exprcore import Chart, ExprSyntaxError, UnknownSymbolError, parse_expr
from .geometry import ChartMetric, Distribution, SignatureError
from .walker import (PureWalkerSpec, WalkerConstraintError, WalkerSpec, adapted_frame,
                     build_walker, pure_walker_metric)

KEYWORDS = ("chart", "signature", "g", "bounds", "walker", "pure_walker", "spinor")

_BLOCK_ENTRY = re.compile(r"\b([AHB])\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*=")
_G_ENTRY = re.compile(r"\bg\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*=")


class MetricFileError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class MetricDefinition:
    metric: ChartMetric
    kind: str                        # "general" | "walker" | "pure_walker"
    L: Distribution | None = None
    walker: WalkerSpec | None = None
    pure: PureWalkerSpec | None = None
    spinor: list | None = None       # component expressions
    source: str = ""
    name: str = ""

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @cached_property
    def frame(self):
        from .spintractor import build_frame
        if self.pure is not None:
            return adapted_frame(self.pure, self.metric)
        return build_frame(self.metric)

    def spinor_field(self):
        from .spintractor import SpinorField
        if self.spinor is None:
            return None
        return SpinorField(self.spinor, self.frame, label=f"{self.name}:spinor")


def _statements(text: str):
    """Yield (line_number, statement text) pairs."""
    buf, start = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        while line:
            head, sep, rest = line.partition(";")
            if head.strip():
                if start is None:
                    start = lineno
                buf.append(head)
            if sep:
                if start is not None:
                    yield start, " ".join(buf).strip()
                elif head.strip() == "":
                    pass
                buf, start = [], None
            line = rest if sep else ""
    if buf and "".join(buf).strip():
        raise MetricFileError("statement is missing its terminating ';'", start)


def _split_top_level(s: str, sep: str = ","):
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _entries(body: str, pattern: re.Pattern, line: int):
    matches = list(pattern.finditer(body))
    if body.strip() and (not matches or body[:matches[0].start()].strip()):
        raise MetricFileError(f"cannot read entry list {body.strip()!r}", line)
    out = []
    for k, mt in enumerate(matches):
        end = matches[k + 1].start() if k + 1 < len(matches) else len(body)
        expr = body[mt.end():end].strip()
        if not expr:
            raise MetricFileError(f"empty expression for {mt.group(0).rstrip('=').strip()}", line)
        out.append((mt.groups(), expr))
    return out


def _parse(source: str, chart: Chart, line: int):
    try:
        return parse_expr(source, chart)
    except ExprSyntaxError as exc:
        raise MetricFileError(f"syntax error in {source!r}: {exc}", line) from None
    except UnknownSymbolError as exc:
        raise MetricFileError(f"unknown symbol {exc.args[0]!r} in {source!r}", line) from None


def parse_metric_file(text: str, name: str = "", bindings=None) -> MetricDefinition:
    chart = None
    signature = None
    entries = {}
    bounds = {}
    walker = pure = None
    spinor_src = None
    line_of = {}
    for line, stmt in _statements(text):
        key, _, body = stmt.partition(" ")
        key = key.strip()
        body = body.strip()
        if key not in KEYWORDS:
            raise MetricFileError(f"unknown keyword {key!r}", line)
        line_of[key] = line
        if key == "chart":
            names = body.split()
            if not names:
                raise MetricFileError("chart needs at least one coordinate", line)
            try:
                chart = Chart(tuple(names))
            except ValueError as exc:
                raise MetricFileError(str(exc), line) from None
        elif key == "signature":
            parts = body.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise MetricFileError("signature needs two non-negative integers", line)
            signature = (int(parts[0]), int(parts[1]))
        elif key == "g":
            m = re.fullmatch(r"(\S+)\s+(\S+)\s*=\s*(.+)", body)
            if not m:
                raise MetricFileError("expected 'g i j = <expr>'", line)
            if chart is None:
                raise MetricFileError("'g' entry before 'chart'", line)
            i, j = (_index(chart, tok, line) for tok in m.group(1, 2))
            e = _parse(m.group(3), chart, line)
            if (i, j) in entries or (j, i) in entries:
                raise MetricFileError(f"entry ({i + 1},{j + 1}) set twice", line)
            entries[(i, j)] = e
        elif key == "bounds":
            parts = body.split()
            if len(parts) != 3:
                raise MetricFileError("expected 'bounds <coord> <lo> <hi>'", line)
            try:
                lo, hi = float(Fraction(parts[1])), float(Fraction(parts[2]))
            except (ValueError, ZeroDivisionError):
                raise MetricFileError("bounds must be numbers", line) from None
            if not lo < hi:
                raise MetricFileError("bounds need lo < hi", line)
            bounds[parts[0]] = (lo, hi)
        elif key == "walker":
            if chart is None:
                raise MetricFileError("'walker' needs a preceding 'chart'", line)
            head, _, rest = body.partition(" ")
            if not head.isdigit():
                raise MetricFileError("expected 'walker r ...'", line)
            r = int(head)
            s = chart.dim - 2 * r
            if r < 1 or s < 0:
                raise MetricFileError(f"walker rank {r} does not fit dimension {chart.dim}", line)
            blocks = {"A": [[ec.ZERO] * s for _ in range(s)], "H": [[ec.ZERO] * r for _ in range(s)],
                      "B": [[ec.ZERO] * r for _ in range(r)]}
            for (blk, i, j), src in _entries(rest, _BLOCK_ENTRY, line):
                i, j = int(i) - 1, int(j) - 1
                M = blocks[blk]
                if not (0 <= i < len(M) and M and 0 <= j < len(M[0])):
                    raise MetricFileError(f"{blk}({i + 1},{j + 1}) is out of range", line)
                e = _parse(src, chart, line)
                M[i][j] = e
                if blk in "AB":
                    M[j][i] = e
            walker = (WalkerSpec(chart.dim, r, blocks["A"], blocks["H"], blocks["B"], chart.names), line)
        elif key == "pure_walker":
            tokens = body.split(None, 2)
            if not tokens or not tokens[0].isdigit():
                raise MetricFileError("expected 'pure_walker m [split] g(i,j)=... ;'", line)
            m = int(tokens[0])
            rest = body[len(tokens[0]):].strip()
            split = False
            if rest.startswith("split"):
                split = True
                rest = rest[len("split"):].strip()
            spec = PureWalkerSpec(m, [[ec.ZERO] * m for _ in range(m)], split)
            pchart = Chart(spec.names)
            for (i, j), src in _entries(rest, _G_ENTRY, line):
                i, j = int(i) - 1, int(j) - 1
                if not (0 <= i < m and 0 <= j < m):
                    raise MetricFileError(f"g({i + 1},{j + 1}) is out of range", line)
                e = _parse(src, pchart, line)
                spec.g[i][j] = spec.g[j][i] = e
            pure = (spec, line)
        elif key == "spinor":
            spinor_src = (_split_top_level(body), line)

    kinds = [k for k, v in (("g", entries), ("walker", walker), ("pure_walker", pure)) if v]
    if len(kinds) > 1:
        raise MetricFileError(f"conflicting metric definitions: {', '.join(kinds)}", line_of[kinds[-1]])
    if not kinds:
        raise MetricFileError("no metric defined", max(line_of.values(), default=1))

    L = None
    try:
        if pure is not None:
            spec, line = pure
            if chart is not None and chart.names != spec.names:
                raise MetricFileError(f"pure_walker uses coordinates {' '.join(spec.names)}", line)
            spec.bounds = _check_bounds(bounds, spec.names, line_of.get("bounds", line))
            g = pure_walker_metric(spec, name=name)
            if signature is not None and signature != spec.signature:
                raise MetricFileError(f"declared signature {signature} differs from {spec.signature}",
                                      line_of["signature"])
            L = Distribution.coordinate(g.chart, g.chart.names[:spec.m])
            kind = "pure_walker"
            pure = spec
        elif walker is not None:
            spec, line = walker
            spec.bounds = _check_bounds(bounds, chart.names, line_of.get("bounds", line))
            res = build_walker(spec, name=name)
            g, L = res.metric, res.L
            if signature is not None and signature != g.signature:
                raise MetricFileError(f"declared signature {signature} differs from {g.signature}",
                                      line_of["signature"])
            kind = "walker"
            walker = spec
        else:
            if signature is None:
                raise MetricFileError("'signature' is required for explicit metrics", line_of["g"])
            c = chart.with_bounds(_check_bounds(bounds, chart.names, line_of.get("bounds", 1)))
            g = ChartMetric.from_entries(c, entries, signature, bindings=bindings, name=name)
            kind = "general"
    except (WalkerConstraintError, SignatureError, ValueError) as exc:
        if isinstance(exc, MetricFileError):
            raise
        key = {"pure_walker": "pure_walker", "walker": "walker"}.get(kinds[0], "g")
        raise MetricFileError(str(exc), line_of.get(key, 1)) from None

    spinor = None
    if spinor_src is not None:
        parts, line = spinor_src
        spinor = [_parse(p, g.chart, line) for p in parts]
    return MetricDefinition(g, kind, L, walker if kind == "walker" else None,
                            pure if kind == "pure_walker" else None, spinor, text, name)


def _index(chart: Chart, tok: str, line: int) -> int:
    if tok.isdigit():
        k = int(tok) - 1
        if not 0 <= k < chart.dim:
            raise MetricFileError(f"index {tok} out of range 1..{chart.dim}", line)
        return k
    if tok in chart.names:
        return chart.index(tok)
    raise MetricFileError(f"unknown coordinate {tok!r}", line)


def _check_bounds(bounds: dict, names, line: int) -> dict:
    for k in bounds:
        if k not in names:
            raise MetricFileError(f"bounds for unknown coordinate {k!r}", line)
    return dict(bounds)


def load_metric_file(path, bindings=None) -> MetricDefinition:
    from pathlib import Path
    p = Path(path)
    return parse_metric_file(p.read_text(), name=p.stem, bindings=bindings)


def to_metric_file(defn: MetricDefinition) -> str:
    """Serialize back to the file format (explicit, walker or pure_walker stanza)."""
    out = []
    g = defn.metric
    if defn.kind == "pure_walker":
        spec = defn.pure
        ents = " ".join(f"g({i + 1},{j + 1})={ec.to_source(spec.g[i][j])}"
                        for i in range(spec.m) for j in range(i, spec.m) if spec.g[i][j] != ec.ZERO)
        out.append(f"pure_walker {spec.m}{' split' if spec.split else ''} {ents} ;".replace("  ", " "))
    else:
        out.append("chart " + " ".join(g.chart.names) + " ;")
        out.append(f"signature {g.signature[0]} {g.signature[1]} ;")
        if defn.kind == "walker":
            w = defn.walker
            parts = []
            for blk, M, sym in (("A", w.A, True), ("H", w.H, False), ("B", w.B, True)):
                for i, row in enumerate(M):
                    for j, e in enumerate(row):
                        if e != ec.ZERO and (not sym or j >= i):
                            parts.append(f"{blk}({i + 1},{j + 1})={ec.to_source(e)}")
            out.append(f"walker {w.r} " + " ".join(parts) + " ;")
        else:
            for i in range(g.n):
                for j in range(i, g.n):
                    e = g.components[i][j]
                    if e != ec.ZERO:
                        out.append(f"g {i + 1} {j + 1} = {ec.to_source(e)} ;")
    for k, nm in enumerate(g.chart.names):
        lo, hi = g.chart.box()[k]
        if (lo, hi) != (-0.5, 0.5):
            out.append(f"bounds {nm} {lo!r} {hi!r} ;")
    if defn.spinor is not None:
        out.append("spinor " + ", ".join(ec.to_source(e) for e in defn.spinor) + " ;")
    return "\n".join(out) + "\n"
