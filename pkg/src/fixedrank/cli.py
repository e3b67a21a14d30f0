"""Command-line interface.

Exit codes: 0 success, 1 I/O or parse failure, 2 violated numerical
precondition (skeleton proximity, rank deficiency, shape mismatch),
3 run cut short by a skeleton crossing (partial outputs kept),
4 an experiment check failed.  Failures print one line
``error code=<n> kind=<ExceptionName> message=<text>`` on standard error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config
from .dynamics import (
    DoRunConfig,
    VectorField,
    affine_field,
    dense_reference,
    evaluate_error_bound,
    integrate_do,
    linear_field,
    scalar_field,
    skew_field,
    zero_field,
)
from .errors import FormatError, LowRankError, SkeletonProximityError
from .experiments import RECIPES, run_recipe
from .geodesic import geodesic_path
from .instances import gapped_matrix
from .io import read_descriptor, read_matrix, read_point, write_matrix, write_point
from .manifold import NormalVector, curvature_spectrum, metric, project_tangent, weingarten
from .optim import OptimConfig, minimize
from .projection import differential, track_best_rank, truncate
from .rng import make_rng
from .trajectory import format_real

EXIT_OK, EXIT_IO, EXIT_PRECONDITION, EXIT_SKELETON, EXIT_CHECK = 0, 1, 2, 3, 4


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _fail_line(code: int, kind: str, message: str) -> None:
    print(f"error code={code} kind={kind} message={message}", file=sys.stderr)


def _out(args, name: str) -> Path:
    path = Path(args.out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_truncate(args) -> int:
    A = read_matrix(args.input)
    point, gap = truncate(A, args.r, eps_gap=args.tol_gap)
    write_point(args.out_point or _out(args, "point.txt"), point)
    gap_path = Path(args.out_gap) if args.out_gap else _out(args, "gap.txt")
    gap_path.write_text(gap.line() + "\n")
    print(gap.line())
    return EXIT_OK


def cmd_dsvd(args) -> int:
    A = read_matrix(args.input)
    X = read_matrix(args.direction)
    D = differential(A, args.r, X, eps_gap=args.tol_gap)
    write_matrix(args.out or _out(args, "dsvd.txt"), D.dense(), args.format)
    return EXIT_OK


def cmd_curvature(args) -> int:
    p = read_point(args.point)
    N = NormalVector(p, read_matrix(args.normal))
    spectrum = curvature_spectrum(p, N)
    path = Path(args.out) if args.out else _out(args, "curvature.csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "kappa", "relation_residual"))
        for i, (kappa, phi) in enumerate(spectrum.entries):
            res = weingarten(p, N, phi) - phi * kappa
            w.writerow((i, format_real(kappa), format_real(np.sqrt(metric(res, res)))))
    print(f"nonzero_count {spectrum.nonzero_count}")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    p = read_point(args.point)
    X = project_tangent(p, read_matrix(args.direction))
    times, points, vels = geodesic_path(p, X, args.steps, t1=args.t1)
    with _out(args, "geodesic.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "speed", "distance_from_start"))
        R0 = p.dense()
        for t, q, v in zip(times, points, vels):
            w.writerow((format_real(t), format_real(v.norm()), format_real(np.linalg.norm(q.dense() - R0))))
    write_point(_out(args, "geodesic_end.txt"), points[-1])
    return EXIT_OK


_DESCRIPTOR_KEYS = {
    "field", "c", "A", "B", "scale", "l", "m", "r", "t0", "t1", "dt", "scheme", "mode", "seed",
    "initial", "trajectory", "error_report", "gauge_every", "record_stride", "K",
}


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def build_field(desc: dict, base: Path, l: int, rng) -> VectorField:
    kind = desc.get("field", "zero")
    if kind == "zero":
        return zero_field()
    if kind == "scalar":
        return scalar_field(float(desc.get("c", "0.5")))
    if kind == "skew":
        return skew_field(l, rng, float(desc.get("scale", "1.0")))
    if kind == "linear":
        if "A" in desc:
            return linear_field(read_matrix(_resolve(base, desc["A"])))
        return linear_field(float(desc.get("scale", "1.0")) * rng.standard_normal((l, l)) / np.sqrt(l))
    if kind == "affine":
        if "B" not in desc:
            raise FormatError(base, "affine field needs B")
        B = read_matrix(_resolve(base, desc["B"]))
        A = read_matrix(_resolve(base, desc["A"])) if "A" in desc else np.zeros((B.shape[0], B.shape[0]))
        return affine_field(A, B)
    raise FormatError(base, f"unknown field {kind!r}")


def cmd_do_run(args) -> int:
    path = Path(args.descriptor)
    desc = read_descriptor(path)
    unknown = set(desc) - _DESCRIPTOR_KEYS
    if unknown:
        raise FormatError(path, f"unknown keys {sorted(unknown)}")
    base = path.parent
    try:
        seed = int(desc.get("seed", args.seed))
        rng = make_rng(seed)
        if "initial" in desc:
            F0 = read_matrix(_resolve(base, desc["initial"]))
            l, m = F0.shape
            r = int(desc["r"])
        else:
            l, m, r = int(desc["l"]), int(desc["m"]), int(desc["r"])
            F0 = gapped_matrix(rng, l, m, r)
        cfg = DoRunConfig(
            t0=float(desc.get("t0", 0.0)), t1=float(desc.get("t1", 1.0)), dt=float(desc.get("dt", 1e-2)),
            scheme=desc.get("scheme", "rk4"), mode=desc.get("mode", "factor_ode"),
            gauge_every=int(desc.get("gauge_every", 1)), record_stride=int(desc.get("record_stride", 1)),
            eps_gap=args.tol_gap,
        )
        K = float(desc["K"]) if "K" in desc else None
    except KeyError as exc:
        raise FormatError(path, f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, LowRankError):
            raise
        raise FormatError(path, str(exc)) from None
    f = build_field(desc, base, l, rng)
    traj_path = _out(args, desc.get("trajectory", "trajectory.csv"))
    err_path = _out(args, desc.get("error_report", "error.csv"))
    summary = [f"field = {f.name}", f"l = {l}", f"m = {m}", f"r = {r}"]

    p0, _ = truncate(F0, r, eps_gap=args.tol_gap)
    try:
        traj = integrate_do(p0, f, cfg)
    except SkeletonProximityError as exc:
        exc.trajectory.status = "skeleton_crossing"
        exc.trajectory.write_csv(traj_path)
        summary += ["status = skeleton_crossing", f"crossing_time = {format_real(exc.time)}"]
        _out(args, "summary.txt").write_text("\n".join(summary) + "\n")
        raise CliFailure(EXIT_SKELETON, "SkeletonProximityError", str(exc)) from None
    traj.write_csv(traj_path)
    ref = dense_reference(F0, f, cfg)
    report = evaluate_error_bound(traj, ref, f, K, eps_gap=args.tol_gap)
    report.write_csv(err_path)
    summary += [
        f"eta = {format_real(report.eta)}",
        f"K = {format_real(report.K)}",
        f"K_certified = {report.K_certified}",
        f"bound_violations = {len(report.violations())}",
    ]
    if f.name.startswith("scalar"):
        c = float(desc.get("c", "0.5"))
        exact = np.exp(c * (cfg.t1 - cfg.t0)) * p0.dense()
        summary.append(f"terminal_error_closed_form = {format_real(np.linalg.norm(traj.final.dense() - exact))}")
    if report.crossing_time is not None:
        summary += ["status = skeleton_crossing", f"crossing_time = {format_real(report.crossing_time)}"]
        _out(args, "summary.txt").write_text("\n".join(summary) + "\n")
        raise CliFailure(EXIT_SKELETON, "SkeletonProximityError",
                         f"reference crosses the skeleton at t={report.crossing_time:.6g}")
    summary.append("status = ok")
    _out(args, "summary.txt").write_text("\n".join(summary) + "\n")
    return EXIT_OK


def cmd_track_svd(args) -> int:
    A0 = read_matrix(args.start)
    A1 = read_matrix(args.velocity)
    if A0.shape != A1.shape:
        raise CliFailure(EXIT_PRECONDITION, "ShapeError", "start and velocity shapes differ")
    try:
        traj = track_best_rank(lambda t: (A0 + t * A1, A1), 0.0, args.t1, args.dt, args.r,
                               record_stride=args.record_stride, eps_gap=args.tol_gap)
    except SkeletonProximityError as exc:
        if getattr(exc, "trajectory", None) is not None:
            exc.trajectory.status = "skeleton_crossing"
            exc.trajectory.write_csv(_out(args, "tracking.csv"))
        raise CliFailure(EXIT_SKELETON, "SkeletonProximityError", str(exc)) from None
    traj.write_csv(_out(args, "tracking.csv"))
    write_point(_out(args, "tracking_end.txt"), traj.final)
    oracle, _ = truncate(A0 + args.t1 * A1, args.r, eps_gap=args.tol_gap)
    print(f"terminal_error {format_real(np.linalg.norm(traj.final.dense() - oracle.dense()))}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    target = read_matrix(args.target)
    init = read_point(args.init) if args.init else None
    cfg = OptimConfig(method=args.method, step_rule=args.step_rule, alpha=args.alpha,
                      max_iters=args.max_iters, grad_tol=args.grad_tol)
    p, trace = minimize(target, args.r, init, cfg, rng=make_rng(args.seed))
    trace.write_csv(_out(args, f"trace_{args.method}.csv"))
    write_point(_out(args, f"result_{args.method}.txt"), p)
    print(f"status {trace.status} iters {len(trace) - 1} J {format_real(trace.J[-1])} "
          f"grad_norm {format_real(trace.grad_norm[-1])}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise CliFailure(EXIT_IO, "ParseError", f"parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    try:
        result = run_recipe(args.recipe, args.out_dir, args.seed, params, parallel=args.parallel, workers=args.workers)
    except ValueError as exc:
        if isinstance(exc, LowRankError):
            raise
        raise CliFailure(EXIT_IO, "ParseError", str(exc)) from None
    for c in result.checks:
        print(c.line())
    if not result.passed:
        raise CliFailure(EXIT_CHECK, "CheckFailed", "failed checks: " + ",".join(result.failed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixedrank", description="Fixed-rank matrix manifold toolkit.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol-gap", type=float, default=config.EPS_GAP, dest="tol_gap")
    parser.add_argument("--format", choices=("text", "binary"), default="text")
    parser.add_argument("--out-dir", default=".", dest="out_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("truncate", help="best rank-r approximation and gap report")
    s.add_argument("input")
    s.add_argument("-r", type=int, required=True)
    s.add_argument("--out-point", dest="out_point")
    s.add_argument("--out-gap", dest="out_gap")
    s.set_defaults(func=cmd_truncate)

    s = sub.add_parser("dsvd", help="derivative of the truncation along a direction")
    s.add_argument("input")
    s.add_argument("direction")
    s.add_argument("-r", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dsvd)

    s = sub.add_parser("curvature", help="principal curvatures of a point in a normal direction")
    s.add_argument("point")
    s.add_argument("normal")
    s.add_argument("--out")
    s.set_defaults(func=cmd_curvature)

    s = sub.add_parser("geodesic", help="geodesic from a point along a projected direction")
    s.add_argument("point")
    s.add_argument("direction")
    s.add_argument("--steps", type=int, default=config.GEODESIC_STEPS)
    s.add_argument("--t1", type=float, default=1.0)
    s.set_defaults(func=cmd_geodesic)

    s = sub.add_parser("do-run", help="DO integration described by a key = value file")
    s.add_argument("descriptor")
    s.set_defaults(func=cmd_do_run)

    s = sub.add_parser("track-svd", help="track the best rank-r approximation of A0 + t A1")
    s.add_argument("start")
    s.add_argument("velocity")
    s.add_argument("-r", type=int, required=True)
    s.add_argument("--t1", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--record-stride", type=int, default=1, dest="record_stride")
    s.set_defaults(func=cmd_track_svd)

    s = sub.add_parser("optimize", help="minimize the distance to a target over rank-r matrices")
    s.add_argument("target")
    s.add_argument("-r", type=int, required=True)
    s.add_argument("--method", choices=("gd", "cg", "newton"), default="gd")
    s.add_argument("--step-rule", choices=("fixed", "armijo"), default="armijo", dest="step_rule")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--max-iters", type=int, default=5000, dest="max_iters")
    s.add_argument("--grad-tol", type=float, default=1e-8, dest="grad_tol")
    s.add_argument("--init")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("experiment", help="run a seeded experiment recipe")
    s.add_argument("recipe", choices=sorted(RECIPES))
    s.add_argument("--param", action="append", help="key=value override (repeatable)")
    s.add_argument("--parallel", action="store_true")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as exc:
        _fail_line(exc.code, exc.kind, str(exc))
        return exc.code
    except FormatError as exc:
        _fail_line(EXIT_IO, type(exc).__name__, str(exc))
        return EXIT_IO
    except LowRankError as exc:
        _fail_line(EXIT_PRECONDITION, type(exc).__name__, str(exc))
        return EXIT_PRECONDITION
    except (OSError, UnicodeDecodeError) as exc:
        _fail_line(EXIT_IO, type(exc).__name__, str(exc))
        return EXIT_IO
    except ValueError as exc:
        _fail_line(EXIT_PRECONDITION, type(exc).__name__, str(exc))
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
