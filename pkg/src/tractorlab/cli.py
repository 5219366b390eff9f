"""Batch driver: load a metric definition, run named checks, emit a JSON report.

    tractorlab run job.json
    tractorlab check --example pure_m2 certify_parallel_spinor theorem2_pipeline
    tractorlab examples

Exit status: 0 when every verdict passes, 1 when some check fails, 2 when the
job (or its metric file) does not validate.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import exprcore as ec
from .clifford import UnsupportedSignatureError, build_clifford
from .corpus import get_example, list_examples
from .curves import DEFAULT_STEP
from .geometry import _points, check_distribution_parallel, check_integrable, check_ricci_image
from .geometry import check_schouten_image, scalar_curvature_report
from .linalg import span_distance
from .metricfile import MetricDefinition, MetricFileError, load_metric_file, parse_metric_file
from .reports import CheckReport, _plain
from .spintractor import (check_parallel_spinor, check_spin_tractor_parallel, check_twistor,
                          SpinorField, conformal_rescale_spinor, contains_s_plus, d_invariant, kernel_distribution,
                          spinor_kernel_coords, twistor_to_tractor)
from .tractor import (_project_point, build_H_from_L, check_metricity, gauge_matrix, holonomy_sample,
                      project_L_from_H, verify_invariant_lightlike)
from .walker import build_pure_walker, validate_ricci_isotropic

DEFAULTS = {"seed": 42, "samples": 64, "tol": 1e-6, "rk4_step": DEFAULT_STEP}


class JobValidationError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# ---------------------------------------------------------------------------
# job description


@dataclass
class CommandSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class JobSpec:
    metric: dict                       # exactly one of {"file", "inline", "example"}
    commands: list                     # CommandSpec
    seed: int = DEFAULTS["seed"]
    samples: int = DEFAULTS["samples"]
    tol: float = DEFAULTS["tol"]
    rk4_step: float = DEFAULTS["rk4_step"]
    fail_fast: bool = False
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "JobSpec":
        if not isinstance(data, dict):
            raise JobValidationError("job must be a JSON object")
        unknown = set(data) - {"metric", "commands", "seed", "samples", "tol", "rk4_step", "fail_fast", "output"}
        if unknown:
            raise JobValidationError(f"unknown job field {sorted(unknown)[0]!r}")
        if "metric" not in data:
            raise JobValidationError("job has no metric source")
        cmds = []
        for c in data.get("commands", []):
            if isinstance(c, str):
                cmds.append(CommandSpec(c))
            elif isinstance(c, dict) and "name" in c:
                cmds.append(CommandSpec(c["name"], dict(c.get("params", {}))))
            else:
                raise JobValidationError(f"cannot read command entry {c!r}")
        kw = {k: data[k] for k in ("seed", "samples", "tol", "rk4_step", "fail_fast", "output") if k in data}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(metric=data["metric"], commands=cmds, **kw)

    @classmethod
    def load(cls, path, **overrides) -> "JobSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise JobValidationError(f"job file is not valid JSON: {exc.msg}", exc.lineno) from None
        return cls.from_dict(data, **overrides)


def load_definition(source: dict) -> MetricDefinition:
    if not isinstance(source, dict):
        raise JobValidationError("metric source must be an object with 'file', 'inline' or 'example'")
    keys = [k for k in ("file", "inline", "example") if k in source]
    if len(keys) != 1:
        raise JobValidationError("metric source needs exactly one of 'file', 'inline', 'example'")
    key = keys[0]
    try:
        if key == "file":
            return load_metric_file(source["file"])
        if key == "inline":
            return parse_metric_file(source["inline"], name=source.get("name", "inline"))
        return get_example(source["example"]).load()
    except MetricFileError as exc:
        raise JobValidationError(str(exc.args[0]).split(": ", 1)[-1], exc.line) from None
    except KeyError as exc:
        raise JobValidationError(str(exc.args[0])) from None
    except OSError as exc:
        raise JobValidationError(f"cannot read metric file: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands


@dataclass
class Context:
    defn: MetricDefinition
    job: JobSpec

    @property
    def g(self):
        return self.defn.metric

    def points(self, params):
        return _points(self.g, int(params.get("samples", self.job.samples)),
                       int(params.get("seed", self.job.seed)), None)

    def spinor(self):
        """Explicit spinor of the definition, else the certified one of a pure normal form."""
        d = self.defn
        if d.spinor is not None:
            return d.spinor_field()
        return self.certified()

    def certified(self, tol: float = 1e-7):
        """Certified parallel spinor of the pure normal form, read in the definition's own frame."""
        res = build_pure_walker(self.defn.pure, seed=self.job.seed, tol=tol)
        return SpinorField(res.spinor.components, self.defn.frame, label="parallel")


def _merge(reports, name, tol) -> CheckReport:
    out = CheckReport(name, max(r.samples for r in reports), tol)
    for r in reports:
        out.failures.extend(r.failures)
        for p in r.singular_points:
            if p not in out.singular_points:
                out.singular_points.append(p)
    out.max_residual = max(r.max_residual for r in reports)
    out.details = {r.check: r.to_dict() for r in reports}
    return out


def _tol(params, job, default=None):
    return float(params.get("tol", job.tol if default is None else default))


def cmd_curvature(ctx, params):
    pts = ctx.points(params)
    rep = CheckReport("curvature", len(pts), _tol(params, ctx.job))
    riem = ric = scal = sch = 0.0
    for x in pts:
        try:
            pc = ctx.g.curvature_at(x)
        except Exception as exc:  # non-invertible metric at the sample
            rep.singular(x, str(exc))
            continue
        riem = max(riem, float(np.max(np.abs(pc.riemann))))
        ric = max(ric, float(np.max(np.abs(pc.ricci))))
        scal = max(scal, abs(float(pc.scal)))
        sch = max(sch, float(np.max(np.abs(pc.schouten))))
        if params.get("expect_flat"):
            rep.record(x, float(np.max(np.abs(pc.riemann))))
    rep.details = {"max_abs_riemann": riem, "max_abs_ricci": ric, "max_abs_scal": scal,
                   "max_abs_schouten": sch}
    return rep


def cmd_signature(ctx, params):
    return ctx.g.check_signature(ctx.points(params))


def cmd_metricity(ctx, params):
    return check_metricity(ctx.g, seed=int(params.get("seed", ctx.job.seed)), tol=_tol(params, ctx.job, 1e-8),
                           points=ctx.points(params))


def cmd_holonomy_sample(ctx, params):
    from .tractor import default_loops
    g = ctx.g
    base = np.asarray(params.get("base", g.chart.box().mean(axis=1)), dtype=float)
    loops = default_loops(base, g.n, float(params.get("eps", 0.1)))
    k = int(params.get("max_loops", 3))
    hs = holonomy_sample(g, base, loops[:k] if k > 0 else loops,
                         step=float(params.get("rk4_step", ctx.job.rk4_step)))
    rep = CheckReport("holonomy_sample", 1, _tol(params, ctx.job))
    for _, M in hs.loops:
        rep.record(base, hs.gram_residual(M))
    rep.details = {"base": base.tolist(), "max_identity_deviation": hs.max_identity_deviation(),
                   "loops": hs.to_records()}
    return rep


def _default_sigma(g):
    return f"({g.chart.names[0]})/10"


def cmd_gauge_covariance(ctx, params):
    """Holonomy in g versus holonomy in exp(2 sigma) g, compared through the gauge matrix."""
    from .tractor import default_loops
    g = ctx.g
    sigma = ec.parse_expr(str(params.get("sigma", _default_sigma(g))), g.chart)
    base = np.asarray(params.get("base", g.chart.box().mean(axis=1)), dtype=float)
    loops = default_loops(base, g.n, float(params.get("eps", 0.1)))[: int(params.get("max_loops", 1))]
    step = float(params.get("rk4_step", ctx.job.rk4_step))
    h1 = holonomy_sample(g, base, loops, step=step)
    h2 = holonomy_sample(g.rescaled(sigma), base, loops, step=step)
    P = gauge_matrix(g, sigma, base)
    rep = CheckReport("gauge_covariance", 1, _tol(params, ctx.job))
    for (_, M1), (_, M2) in zip(h1.loops, h2.loops):
        rep.record(base, float(np.max(np.abs(P @ M1 @ np.linalg.inv(P) - M2))))
    rep.details = {"sigma": ec.to_source(sigma), "loops": len(loops)}
    return rep


def cmd_ricci_isotropic(ctx, params):
    return validate_ricci_isotropic(ctx.g, ctx.defn.L, points=ctx.points(params), tol=_tol(params, ctx.job, 1e-7))


def cmd_scal_vanishing(ctx, params):
    """Where Ric and K map into a lightlike L, the scalar curvature vanishes."""
    pts = ctx.points(params)
    tol = _tol(params, ctx.job)
    sch = check_schouten_image(ctx.g, ctx.defn.L, points=pts, tol=1e-7)
    scal = scalar_curvature_report(ctx.g, points=pts, tol=tol)
    rep = CheckReport("scal_vanishing", len(pts), tol)
    rep.details = {"schouten_image": sch.to_dict(), "scal": scal.to_dict(), "hypothesis": sch.passed}
    if sch.passed:
        rep.failures.extend(scal.failures)
        rep.max_residual = scal.max_residual
    return rep


def cmd_theorem1_pipeline(ctx, params):
    """L parallel, lightlike, Ricci-isotropic  ->  H = (0, L, 0) + s_plus invariant, L recovered."""
    g, L = ctx.g, ctx.defn.L
    pts = ctx.points(params)
    tol = _tol(params, ctx.job, 1e-7)
    par = check_distribution_parallel(g, L, points=pts, tol=tol)
    ric = check_ricci_image(g, L, points=pts, tol=tol)
    H = build_H_from_L(g, L)
    inv = verify_invariant_lightlike(g, H, points=pts, tol=tol)
    proj, singular = project_L_from_H(g, H, points=pts)
    rec = CheckReport("project_L_from_H", len(pts), float(params.get("projection_tol", 1e-8)))
    for x in pts:
        rec.record(x, span_distance(proj.basis_at(x), L.matrix(x)))
    for s in singular:
        rec.singular(s["point"], f"projected rank {s['rank']}")
    rep = _merge([par, ric, inv, rec], "theorem1_pipeline", tol)
    rep.details["H_rank"] = H.rank
    return rep


def cmd_certify_parallel_spinor(ctx, params):
    pts = ctx.points(params)
    tol = _tol(params, ctx.job, 1e-7)
    d = ctx.defn
    if d.spinor is None:
        phi = ctx.certified(tol)
    else:
        phi = d.spinor_field()
    rep = check_parallel_spinor(ctx.g, phi.frame, phi, points=pts, tol=tol)
    rep.check = "certify_parallel_spinor"
    rep.details["components"] = [ec.to_source(c) for c in phi.components]
    return rep


def cmd_twistor(ctx, params):
    """Twistor residual and spin-tractor parallelism of the same field must agree."""
    pts = ctx.points(params)
    tol = _tol(params, ctx.job)
    phi = ctx.spinor()
    tw = check_twistor(ctx.g, phi.frame, phi, points=pts, tol=tol)
    psi = twistor_to_tractor(ctx.g, phi.frame, phi, check=False)
    st = check_spin_tractor_parallel(ctx.g, phi.frame, psi, points=pts, tol=tol)
    rep = CheckReport("twistor", len(pts), tol)
    rep.max_residual = tw.max_residual
    rep.failures = list(tw.failures)
    rep.details = {"twistor": tw.to_dict(), "spin_tractor_parallel": st.to_dict(),
                   "classifications_agree": tw.passed == st.passed}
    if tw.passed != st.passed:
        rep.failures.append((None, float("inf")))
    return rep


def cmd_conformal_twistor(ctx, params):
    """Rescaled twistor spinors stay twistor spinors of the rescaled metric."""
    g = ctx.g
    pts = ctx.points(params)
    tol = _tol(params, ctx.job)
    phi = ctx.spinor()
    sigmas = params.get("sigmas") or [_default_sigma(g)]
    subs = []
    for s in sigmas:
        sigma = ec.parse_expr(str(s), g.chart)
        scaled = conformal_rescale_spinor(phi, sigma)
        r = check_twistor(scaled.metric, scaled.frame, scaled, points=pts, tol=tol)
        r.check = f"twistor[sigma={ec.to_source(sigma)}]"
        subs.append(r)
    return _merge(subs, "conformal_twistor", tol)


def cmd_theorem2_pipeline(ctx, params):
    """Certified spinor -> spin tractor: d = 0, kernel rank min(p,q)+1 with s_plus, L = ker phi."""
    g, d = ctx.g, ctx.defn
    pts = ctx.points(params)
    tol = _tol(params, ctx.job, 1e-7)
    phi = ctx.spinor()
    frame = phi.frame
    psi = twistor_to_tractor(g, frame, phi)
    dinv = d_invariant(g, frame, phi, points=pts, zero_tol=tol)
    rdinv = CheckReport("d_invariant", len(pts), tol)
    for x, v in zip(pts, dinv.values):
        rdinv.record(x, abs(v))
    expected = min(g.signature) + 1
    dist, ranks = kernel_distribution(g, frame, psi, points=pts)
    rk = CheckReport("kernel_rank", len(pts), 0.5)
    sp = CheckReport("contains_s_plus", len(pts), 0.5)
    leq = CheckReport("L_equals_projection", len(pts), float(params.get("projection_tol", 1e-8)))
    for x in pts:
        rk.record(x, abs(ranks[tuple(np.round(x, 12))] - expected))
        sp.record(x, 0.0 if contains_s_plus(frame, psi.at(x)) else 1.0)
        kphi = spinor_kernel_coords(frame, phi.at(x), x)
        leq.record(x, span_distance(_project_point(dist, x), kphi))
        if d.L is not None:
            leq.record(x, span_distance(kphi, d.L.matrix(x)))
    inv = verify_invariant_lightlike(g, dist, points=pts, tol=tol)
    subs = [rdinv, rk, sp, inv, leq]
    if d.L is not None:
        subs.append(check_integrable(g, d.L, points=pts, tol=tol))
    rep = _merge(subs, "theorem2_pipeline", tol)
    rep.details["expected_rank"] = expected
    rep.details["kernel_ranks"] = sorted(set(ranks.values()))
    return rep


def cmd_clifford(ctx, params):
    p, q = ctx.g.signature
    rep = CheckReport("clifford", 1, 0.5)
    cl = build_clifford(p, q)
    rep.record([], cl.relation_residual())
    rep.details = {"signature": [p, q], "N": cl.N, "pairing": cl.pairing.kind,
                   "pairing_factors": list(cl.pairing.factors)}
    return rep


# name -> (function, requirement)
COMMANDS = {
    "curvature": (cmd_curvature, None),
    "signature": (cmd_signature, None),
    "metricity": (cmd_metricity, None),
    "holonomy_sample": (cmd_holonomy_sample, None),
    "gauge_covariance": (cmd_gauge_covariance, None),
    "ricci_isotropic": (cmd_ricci_isotropic, "L"),
    "scal_vanishing": (cmd_scal_vanishing, "L"),
    "theorem1_pipeline": (cmd_theorem1_pipeline, "L"),
    "certify_parallel_spinor": (cmd_certify_parallel_spinor, "spinor"),
    "twistor": (cmd_twistor, "spinor"),
    "conformal_twistor": (cmd_conformal_twistor, "spinor"),
    "theorem2_pipeline": (cmd_theorem2_pipeline, "spinor"),
    "clifford": (cmd_clifford, "clifford"),
}

_NUMERIC = {"samples": int, "seed": int, "tol": float, "eps": float, "rk4_step": float, "max_loops": int,
            "projection_tol": float}


def validate(job: JobSpec) -> MetricDefinition:
    """All checks that can fail before anything runs."""
    if not job.commands:
        raise JobValidationError("job lists no commands")
    for name, typ in (("seed", int), ("samples", int)):
        if not isinstance(getattr(job, name), int) or isinstance(getattr(job, name), bool):
            raise JobValidationError(f"{name} must be an integer")
    if job.samples < 1:
        raise JobValidationError("samples must be positive")
    defn = load_definition(job.metric)
    for c in job.commands:
        if c.name not in COMMANDS:
            raise JobValidationError(f"unknown command {c.name!r}; known: {', '.join(COMMANDS)}")
        if not isinstance(c.params, dict):
            raise JobValidationError(f"params of {c.name} must be an object")
        for key, typ in _NUMERIC.items():
            if key in c.params:
                try:
                    typ(c.params[key])
                except (TypeError, ValueError):
                    raise JobValidationError(f"{c.name}: parameter {key} must be {typ.__name__}") from None
        for key in ("sigma",):
            if key in c.params:
                _check_expr(c.params[key], defn, c.name)
        for s in c.params.get("sigmas", []) or []:
            _check_expr(s, defn, c.name)
        need = COMMANDS[c.name][1]
        if need == "L" and defn.L is None:
            raise JobValidationError(f"{c.name} needs a lightlike distribution (walker or pure_walker metric)")
        if need == "spinor" and defn.spinor is None and defn.pure is None:
            raise JobValidationError(f"{c.name} needs a spinor statement or a pure_walker metric")
        if need == "clifford":
            try:
                build_clifford(*defn.metric.signature)
            except UnsupportedSignatureError as exc:
                raise JobValidationError(f"{c.name}: {exc}") from None
    return defn


def _check_expr(src, defn, cmd):
    try:
        ec.parse_expr(str(src), defn.chart)
    except Exception as exc:
        raise JobValidationError(f"{cmd}: cannot parse {src!r}: {exc}") from None


# ---------------------------------------------------------------------------
# reports


def gamma_representation_id(signature) -> str | None:
    try:
        rep = build_clifford(*signature)
    except UnsupportedSignatureError:
        return None
    return f"cl{signature[0]}{signature[1]}-" + hashlib.sha256(rep.to_json().encode()).hexdigest()[:12]


@dataclass
class Report:
    metric: str
    signature: list
    seed: int
    records: list = field(default_factory=list)
    engine_version: str = __version__
    gamma_representation: str | None = None

    @property
    def passed(self) -> bool:
        return all(r["verdict"] == "pass" for r in self.records)

    def to_dict(self, timing: bool = True) -> dict:
        recs = self.records if timing else [{k: v for k, v in r.items() if k != "timing_s"} for r in self.records]
        return {"engine_version": self.engine_version, "gamma_representation": self.gamma_representation,
                "metric": self.metric, "signature": self.signature, "seed": self.seed,
                "passed": self.passed, "records": recs}

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(_plain(self.to_dict(timing)), indent=2, sort_keys=True, default=str)

    def to_text(self) -> str:
        lines = [f"tractorlab {self.engine_version}  metric={self.metric}  signature={tuple(self.signature)}"
                 f"  seed={self.seed}"]
        for r in self.records:
            extra = f"  error={r['error']}" if r.get("error") else ""
            lines.append(f"{r['verdict'].upper():5s} {r['check']:<24s} max_residual={r['max_residual']:.3e}"
                         f"  singular={len(r['singular_points'])}  time={r.get('timing_s', 0):.2f}s{extra}")
        lines.append("ALL PASS" if self.passed else "SOME CHECKS FAILED")
        return "\n".join(lines)


def _record(cmd: CommandSpec, rep: CheckReport | None, elapsed: float, error: str | None = None) -> dict:
    if rep is None:
        return {"check": cmd.name, "parameters": cmd.params, "verdict": "fail", "max_residual": float("inf"),
                "failures": [], "singular_points": [], "details": {}, "error": error,
                "timing_s": round(elapsed, 6)}
    d = rep.to_dict()
    return {"check": cmd.name, "parameters": cmd.params, "verdict": "pass" if rep.passed else "fail",
            "tolerance": d["tolerance"], "samples": d["samples"], "max_residual": d["max_residual"],
            "failures": d["failures"], "singular_points": d["singular_points"], "details": d["details"],
            "error": None, "timing_s": round(elapsed, 6)}


def run(job: JobSpec, defn: MetricDefinition | None = None) -> Report:
    """Validate, then execute the commands in order."""
    if defn is None:
        defn = validate(job)
    ctx = Context(defn, job)
    g = defn.metric
    report = Report(defn.name or g.name or "metric", list(g.signature), job.seed,
                    gamma_representation=gamma_representation_id(g.signature))
    for cmd in job.commands:
        fn = COMMANDS[cmd.name][0]
        t0 = time.perf_counter()
        try:
            rep = fn(ctx, cmd.params)
            rec = _record(cmd, rep, time.perf_counter() - t0)
        except Exception as exc:  # collected, not fatal for the batch
            rec = _record(cmd, None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
        report.records.append(rec)
        if job.fail_fast and rec["verdict"] != "pass":
            break
    return report


# ---------------------------------------------------------------------------
# command line


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="random seed (default 42)")
    p.add_argument("--samples", type=int, default=d(None), help="sample points per check (default 64)")
    p.add_argument("--tol", type=float, default=d(None), help="default tolerance (default 1e-6)")
    p.add_argument("--rk4-step", type=float, default=d(None), dest="rk4_step",
                   help="transport step size (default 1e-3)")
    p.add_argument("--fail-fast", action="store_true", default=d(False), dest="fail_fast")
    p.add_argument("--format", choices=("json", "text"), default=d(None),
                   help="report format (default json; text for 'examples')")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tractorlab", description="Conformal tractor calculus checks on charts.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run a JSON job file")
    pr.add_argument("job")
    pr.add_argument("-o", "--output")
    _global_flags(pr, suppress=True)
    pc = sub.add_parser("check", help="run commands on a metric file or shipped example")
    src = pc.add_mutually_exclusive_group(required=True)
    src.add_argument("--file")
    src.add_argument("--example")
    pc.add_argument("commands", nargs="+", metavar="COMMAND", help=", ".join(COMMANDS))
    pc.add_argument("-o", "--output")
    _global_flags(pc, suppress=True)
    pe = sub.add_parser("examples", help="list the shipped example corpus")
    _global_flags(pe, suppress=True)
    return parser


def print_examples(fmt: str = "text", out=None) -> None:
    out = out or sys.stdout
    entries = list_examples()
    if fmt == "json":
        out.write(json.dumps([e.summary() for e in entries], indent=2) + "\n")
        return
    for e in entries:
        iso = {True: "ricci-isotropic", False: "not ricci-isotropic", None: ""}[e.ricci_isotropic]
        out.write(f"{e.name:<18s} ({e.signature[0]},{e.signature[1]})  {', '.join(e.witnesses):<22s} {iso}\n"
                  f"{'':18s} {e.description}\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "examples":
        print_examples(args.format or "text")
        return 0
    overrides = {k: getattr(args, k) for k in ("seed", "samples", "tol", "rk4_step")}
    overrides["fail_fast"] = args.fail_fast or None
    overrides["output"] = args.output
    try:
        if args.command == "run":
            job = JobSpec.load(args.job, **overrides)
        else:
            metric = {"file": args.file} if args.file else {"example": args.example}
            job = JobSpec.from_dict({"metric": metric, "commands": args.commands}, **overrides)
        defn = validate(job)
    except (JobValidationError, OSError) as exc:
        sys.stderr.write(f"tractorlab: validation error: {exc}\n")
        return 2
    report = run(job, defn)
    text = report.to_text() if args.format == "text" else report.to_json()  # json unless asked
    if job.output:
        Path(job.output).write_text(report.to_json() + "\n")
    sys.stdout.write(text + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
