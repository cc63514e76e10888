"""Command-line entry point: ``opsplit {run,certify,counterexample,experiment}``.

Exit codes are 0 on success, 1 when an iteration fails to converge or a check
fails, and 2 on usage errors.
"""
import argparse
import io
import json
import math
import os
import re
import sys
import warnings

import numpy as np

from . import certificate as cert
from . import counterexamples as cex
from . import experiments as exp
from .engine import IterationConfig, Status, iterate, write_trace_csv
from .errors import MalformedSystem, OpsplitError
from .operators import (AffineLinear, IndicatorHalfspace, IndicatorNonneg, IndicatorSimplex,
                        L1Offset, NormalConeZero, PairwiseTV, PoissonNLL, QuadraticLS,
                        SkewRotation2D, Zero)
from .splittings import DYS, PDHG3, PPM, PPXA, Family, Ryu3

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
NEGATIVE_VALUE = re.compile(r"^-\d[\d./eE+-]*$")

METHOD_ARITY = {"ppm": 1, "drs": 2, "prs": 2, "family": 2, "ppxa": 3, "ryu3": 3, "dys": 3,
                "pdhg3": 3}


class UsageError(Exception):
    pass


def _operator_from_json(desc, dim):
    kind = desc.get("kind")
    if kind == "zero":
        return Zero(dim)
    if kind == "normal_cone_zero":
        return NormalConeZero(dim)
    if kind == "affine":
        return AffineLinear(np.asarray(desc["M"], dtype=float), desc.get("c"))
    if kind == "skew_rotation_2d":
        return SkewRotation2D(float(desc["kappa"]), dim)
    if kind == "indicator_nonneg":
        return IndicatorNonneg(dim)
    if kind == "indicator_simplex":
        return IndicatorSimplex(dim)
    if kind == "indicator_halfspace":
        return IndicatorHalfspace(np.asarray(desc["mu"], dtype=float), float(desc["b"]))
    if kind == "l1_offset":
        return L1Offset(np.asarray(desc["a"], dtype=float), np.asarray(desc["mask"], dtype=int),
                        dim, desc.get("weight", 1.0))
    if kind == "quadratic_ls":
        return QuadraticLS(np.asarray(desc["A"], dtype=float), desc.get("target", 0.0))
    if kind == "poisson_nll":
        return PoissonNLL(np.asarray(desc["y"], dtype=float), desc.get("weight", 1.0))
    if kind == "pairwise_tv":
        return PairwiseTV(dim, int(desc["start"]), desc.get("weight", 1.0))
    raise UsageError(f"unknown operator kind {kind!r}")


def load_problem(path):
    """Read a problem file.

    Two layouts are accepted: ``{"dim": d, "operators": [...], "z0": [...]}``
    with explicit operator descriptions, or a dumped synthetic problem
    ``{"kind": ..., "seed": ..., "params": ..., "data": ...}``. Returns the
    operator list and an optional starting point.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read problem file {path}: {exc}") from exc
    if "kind" in raw and raw["kind"] in exp.KINDS:
        return list(exp.ProblemSpec.from_json(json.dumps(raw)).operators()), None
    try:
        dim = int(raw["dim"])
        ops = [_operator_from_json(d, dim) for d in raw["operators"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed problem file {path}: {exc}") from exc
    return ops, raw.get("z0")


def _build_method(args, ops):
    m = args.method
    need = METHOD_ARITY[m]
    if len(ops) != need:
        raise UsageError(f"{m} needs {need} operator(s), the problem has {len(ops)}")
    alpha = 1.0 if args.alpha is None else args.alpha
    theta = args.theta
    if m == "ppm":
        return PPM(ops[0], alpha)
    if m == "drs":
        return Family(ops[0], ops[1], alpha, alpha, 1.0 if theta is None else theta, args.eta)
    if m == "prs":
        return Family(ops[0], ops[1], alpha, alpha, 2.0, args.eta)
    if m == "family":
        return Family(ops[0], ops[1], alpha, args.beta, 1.0 if theta is None else theta, args.eta)
    if m == "ryu3":
        return Ryu3(*ops, alpha=alpha, theta=0.5 if theta is None else theta)
    if m == "ppxa":
        return PPXA(*ops, gamma=alpha, theta=1.0 if theta is None else theta)
    if m == "dys":
        return DYS(*ops, alpha=alpha)
    return PDHG3(*ops, tau=alpha, sigma=0.5 if args.sigma is None else args.sigma)


def _emit(args, out, payload, text, trace=None):
    if args.format == "json":
        out.write(json.dumps(payload, sort_keys=True) + "\n")
    elif args.format == "csv" and trace is not None:
        write_trace_csv(trace, out)
    else:
        out.write(text)


def _vec(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


def cmd_run(args, out):
    ops, z0 = load_problem(args.problem)
    try:
        T = _build_method(args, ops)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    z0 = T.zero_point() if z0 is None else np.asarray(z0, dtype=float)
    if z0.shape != T.zero_point().shape:
        raise UsageError(f"z0 has shape {z0.shape}, expected {T.zero_point().shape}")
    cfg = IterationConfig(max_iters=args.max_iters, fp_tol=args.tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = iterate(T, z0, cfg)
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace_csv(res.trace, fh)
    fp = res.trace.fp_residual[-1]
    payload = {"method": args.method, "status": res.status.value, "iterations": res.iterations,
               "fp_residual": fp, "x": _vec(res.x)}
    text = (f"method={args.method} status={res.status.value} iterations={res.iterations} "
            f"fp_residual={fp:.3e}\n")
    if res.x is not None and np.size(res.x) <= 10:
        text += "x = " + " ".join(f"{v:.10g}" for v in np.ravel(res.x)) + "\n"
    _emit(args, out, payload, text, res.trace)
    return EXIT_OK if res.status is Status.CONVERGED else EXIT_FAIL


def _family_thetas(args):
    explicit = [getattr(args, f"theta{i}") for i in range(1, 9)]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise UsageError("give all of --theta1 .. --theta8 or none of them")
        return [cert.to_fraction(v) for v in explicit]
    theta = cert.to_fraction(args.theta or "1")
    eta = cert.to_fraction(args.eta_frac or "0")
    return cert.family_thetas(cert.to_fraction(args.alpha or "1"),
                                cert.to_fraction(args.beta or args.alpha or "1"), theta, eta)


def cmd_certify(args, out):
    try:
        if args.system == "family":
            alpha = cert.to_fraction(args.alpha or "1")
            beta = cert.to_fraction(args.beta or args.alpha or "1")
            system = cert.build_family_system(alpha, beta, _family_thetas(args))
        elif args.system == "ryu3":
            system = cert.build_ryu3_system(cert.to_fraction(args.alpha or "1"),
                                            cert.to_fraction(args.theta or "1/2"))
        elif args.system == "ppxa":
            system = cert.build_ppxa_system(cert.to_fraction(args.alpha or "1"),
                                            theta=cert.to_fraction(args.theta or "1"))
        else:
            if not args.file:
                raise UsageError("--system file needs --file FILE")
            try:
                with open(args.file) as fh:
                    system = cert.ScalarBlockSystem.from_json(fh.read())
            except OSError as exc:
                raise UsageError(str(exc)) from exc
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, MalformedSystem):
            raise
        raise UsageError(str(exc)) from exc
    report = cert.verify_encoding(system)
    payload = {"system": args.system, "report": report.to_json(system)}
    lines = [f"system={args.system} lifting={len(system.inputs)} "
             f"resolvents={len(system.resolvents)}"]
    for (a, b), ok in report.implies_consensus.items():
        lines.append(f"consensus {a} = {b}: {'implied' if ok else 'NOT implied'}")
    for name, flag in (("solution map", report.implies_solution_map),
                       ("zero sum", report.implies_zero_sum)):
        if flag is not None:
            lines.append(f"{name}: {'implied' if flag else 'NOT implied'}")
    for name, vec in payload["report"]["counterexamples"].items():
        lines.append(f"counterexample ({name}): "
                     + " ".join(f"{k}={v}" for k, v in vec.items()))
    if args.probe:
        probe = cert.impossibility_probe(system)
        payload["probe"] = probe.to_json()
        lines.append(f"probe: both implications={probe.both} x_only_rank={probe.x_only_rank} "
                     f"needed={probe.needed_rank}")
    lines.append("result: " + ("PASS" if report.ok else "FAIL"))
    _emit(args, out, payload, "\n".join(lines) + "\n")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_counterexample(args, out):
    if args.kind == "rotation":
        try:
            p = cex.RotationPair(args.alpha, args.beta, args.omega)
            pred = cex.predicted_growth(p, args.theta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        meas = cex.measure_rotation_growth(p, args.theta, args.iters)
        err = abs(pred - meas)
        ok = err <= 1e-8
        header = ("alpha", "beta", "omega", "theta", "predicted", "measured", "abs_error")
        row = (p.alpha, p.beta, p.omega, args.theta, pred, meas, err)
    else:
        theta = args.theta
        T = cex.theta_range_map(theta)
        meas = cex.measure_growth(T, np.ones(1), args.iters)
        pred = abs(1.0 - theta)
        err = abs(pred - meas)
        ok = err <= 1e-12
        header = ("theta", "predicted", "measured", "abs_error")
        row = (theta, pred, meas, err)
    payload = dict(zip(header, row))
    payload["ok"] = ok
    if args.format == "csv":
        text = ",".join(header) + "\n" + ",".join(repr(float(v)) for v in row) + "\n"
    else:
        text = (" ".join(f"{h:>12}" for h in header) + "\n"
                + " ".join(f"{v:>12.8g}" for v in row) + "\n")
    _emit(args, out, payload, text)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_experiment(args, out):
    try:
        spec = exp.generate(args.problem, seed=args.seed)
    except (ValueError, OpsplitError) as exc:
        raise UsageError(str(exc)) from exc
    methods = args.methods.split(",")
    for m in methods:
        if m not in exp.METHOD_PARAMS[spec.kind]:
            raise UsageError(f"method {m!r} is not available for {spec.kind}")
    cfg = IterationConfig(max_iters=args.max_iters, fp_tol=args.tol)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{spec.kind}_problem.json"), "w") as fh:
            fh.write(spec.to_json() + "\n")
    results = exp.run_experiment(spec, methods, cfg, out_dir=args.out, parallel=args.parallel)
    rows = []
    for m, res in results.items():
        ev = exp.evaluate(spec, res.x)
        k6 = res.trace.first_below("rel_change", 1e-6)
        rows.append({"method": m, "status": res.status.value, "iterations": res.iterations,
                     "objective": ev.value, "slack": ev.slack,
                     "fp_residual": res.trace.fp_residual[-1], "rel_change_1e-6_at": k6})
    header = ("method", "status", "iterations", "objective", "slack", "fp_residual",
              "rel_change_1e-6_at")
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for r in rows:
            buf.write(",".join("" if r[h] is None else str(r[h]) for h in header) + "\n")
        text = buf.getvalue()
    else:
        cells = [[str(h) for h in header]]
        for r in rows:
            cells.append([r["method"], r["status"], str(r["iterations"]),
                          f"{r['objective']:.10g}", f"{r['slack']:.2e}",
                          f"{r['fp_residual']:.2e}", str(r["rel_change_1e-6_at"])])
        widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
        text = "".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) + "\n"
                       for line in cells)
    _emit(args, out, {"problem": spec.kind, "seed": spec.seed, "methods": rows}, text)
    failed = any(r.status is Status.DIVERGED or not math.isfinite(exp.evaluate(spec, r.x).value)
                 for r in results.values())
    return EXIT_FAIL if failed else EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="PRNG seed for generated data (default 0)")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="directory for trace CSV files and problem dumps")
    common.add_argument("--format", choices=("csv", "json", "text"), default=argparse.SUPPRESS,
                        help="stdout format (default text)")

    parser = argparse.ArgumentParser(
        prog="opsplit", parents=[common],
        description="Resolvent splittings for monotone inclusions 0 in A x + B x (+ C x).")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="iterate a splitting on a problem file")
    run.add_argument("--method", required=True, choices=sorted(METHOD_ARITY))
    run.add_argument("--problem", required=True, metavar="FILE", help="JSON problem description")
    run.add_argument("--alpha", type=float, help="step size α (γ for ppxa, τ for pdhg3)")
    run.add_argument("--beta", type=float, help="second step size β (family only, default α)")
    run.add_argument("--theta", type=float, help="relaxation θ")
    run.add_argument("--eta", type=float, default=0.0,
                     help="solution-map weight η, S = η x1 + (1 - η) x2")
    run.add_argument("--sigma", type=float, help="dual step σ (pdhg3)")
    run.add_argument("--max-iters", type=int, default=10_000)
    run.add_argument("--tol", type=float, default=1e-10, help="fixed-point residual tolerance")
    run.add_argument("--trace", metavar="FILE", help="write the iteration trace as CSV")
    run.set_defaults(func=cmd_run)

    certify = sub.add_parser("certify", parents=[common],
                             help="check a fixed-point encoding with exact rational arithmetic")
    certify.add_argument("--system", required=True, choices=("family", "ryu3", "ppxa", "file"))
    certify.add_argument("--file", metavar="FILE", help="scalar-block system JSON (--system file)")
    certify.add_argument("--alpha", help="step α as an integer or p/q (γ for ppxa)")
    certify.add_argument("--beta", help="step β as an integer or p/q")
    certify.add_argument("--theta", help="relaxation θ as an integer or p/q")
    certify.add_argument("--eta", dest="eta_frac", help="solution-map weight η")
    for i in range(1, 9):
        certify.add_argument(f"--theta{i}", help=f"row coefficient θ{i} (negative values as "
                             f"--theta{i}=-p/q also accepted)")
    certify.add_argument("--probe", action="store_true",
                         help="also run the no-lifting impossibility probe")
    certify.set_defaults(func=cmd_certify)

    counter = sub.add_parser("counterexample", parents=[common],
                             help="divergence witnesses for the two-operator family")
    counter.add_argument("kind", choices=("rotation", "theta-range"))
    counter.add_argument("--alpha", type=float, default=1.0, help="step α (rotation)")
    counter.add_argument("--beta", type=float, default=2.0, help="step β (rotation)")
    counter.add_argument("--omega", type=float, default=math.pi / 4,
                         help="rotation angle ω in (0, π/2) (rotation)")
    counter.add_argument("--theta", type=float, default=1.0, help="relaxation θ")
    counter.add_argument("--iters", type=int, default=200, help="iterations to measure growth")
    counter.set_defaults(func=cmd_counterexample)

    experiment = sub.add_parser("experiment", parents=[common],
                                help="run the synthetic desk-scale experiments")
    experiment.add_argument("--problem", required=True, choices=exp.KINDS)
    experiment.add_argument("--methods", default="ryu3,ppxa,pdhg3",
                            help="comma-separated method list")
    experiment.add_argument("--max-iters", type=int, default=10_000)
    experiment.add_argument("--tol", type=float, default=1e-10)
    experiment.add_argument("--parallel", action="store_true",
                            help="one thread per method")
    experiment.set_defaults(func=cmd_experiment)
    return parser


def _attach_negative_values(argv):
    # argparse reads "-6/7" as an option; glue such values onto the preceding flag
    argv = list(argv)
    joined = []
    for tok in argv:
        if (joined and joined[-1].startswith("--") and "=" not in joined[-1]
                and NEGATIVE_VALUE.match(tok)):
            joined[-1] = f"{joined[-1]}={tok}"
        else:
            joined.append(tok)
    return joined


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(_attach_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("seed", 0), ("out", None), ("format", "text")):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args, out)
    except (UsageError, MalformedSystem) as exc:
        sys.stderr.write(f"opsplit {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except OpsplitError as exc:
        sys.stderr.write(f"opsplit {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
