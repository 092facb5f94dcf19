"""``ssattn`` command line: run approximations, emit spectra, benchmark, and
check the spectral-shifting claims.

Exit codes: 0 success, 2 usage, 3 numerical failure, 4 I/O failure.
Random inputs come from ``numpy.random.default_rng(seed)`` (PCG64); Q, K, V
are drawn in that order as i.i.d. standard normals.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis
from .exact import AttentionProblem, exact_attention, exact_scores
from .matcore import NumericalError, norm, numerical_rank
from .matrix_io import MatrixIOError, read_matrix, write_matrix
from .nystrom import nystrom_attention, nystrom_attention_materialized, nystrom_state
from .spectral_shift import FlatTailSpec, flat_tail_check
from .ss_attention import DESK_SCALE, SSAttentionConfig, prepare, row_sum_deviation, ss_attention, ss_attention_materialized

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
EXACT_BENCH_LIMIT = 16384


class UsageError(ValueError):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _delta_mode(text: str) -> tuple[str, float]:
    if text == "paper":
        return "paper_formula", 0.0
    if text == "oracle":
        return "full_oracle", 0.0
    if text.startswith("fixed="):
        try:
            value = float(text.split("=", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad fixed delta in {text!r}")
        if not math.isfinite(value):
            raise argparse.ArgumentTypeError("fixed delta must be finite")
        return "fixed", value
    raise argparse.ArgumentTypeError(f"expected paper, oracle or fixed=<value>, got {text!r}")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SSATTN_THREADS", "1")))
    except ValueError:
        return 1


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, allow_nan=False, default=_json_default)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _problem(args) -> AttentionProblem:
    files = [args.q, args.k, args.v]
    if any(files):
        if not all(files):
            raise UsageError("--q, --k and --v must be given together")
        return AttentionProblem.from_arrays(*(read_matrix(f) for f in files))
    if args.n is None or args.d is None:
        raise UsageError("either --q/--k/--v or both --n and --d are required")
    return AttentionProblem.random(args.n, args.d, args.seed)


def _check_desk(n: int, force: bool, what: str) -> None:
    if n > DESK_SCALE and not force:
        raise UsageError(f"{what} materialises an {n}x{n} matrix; n exceeds {DESK_SCALE} (use --force)")


# -- approx -------------------------------------------------------------------


def cmd_approx(args) -> int:
    p = _problem(args)
    m = args.m if args.m is not None else min(p.n, 64)
    if m > p.n:
        raise UsageError(f"--m {m} exceeds n={p.n}")
    if args.materialize:
        _check_desk(p.n, args.force, "--materialize")
    pinv_mode = args.pinv or ("svd" if args.materialize else "iterative")
    delta_mode, delta_value = args.delta_mode
    report = analysis.ApproxReport(
        method=args.method, n=p.n, m=m, d_k=p.d_k, d_v=p.v.shape[1], seed=None if args.q else args.seed
    )
    t0 = time.perf_counter()
    if args.method == "exact":
        out = exact_attention(p)
        report.runtimes["total"] = time.perf_counter() - t0
        if args.materialize:
            s = exact_scores(p)
            report.record_errors(s, s)
            report.rank_s_tilde = numerical_rank(s)
            report.output_err_frobenius_rel = 0.0
            report.row_sum_deviation = row_sum_deviation(s)
    elif args.method == "nystrom":
        report.pinv_mode = pinv_mode
        kern, pinv = nystrom_state(p, m, pinv_mode, args.iters, verify=args.materialize)
        out = nystrom_attention(p, m, state=(kern, pinv))
        report.runtimes["total"] = time.perf_counter() - t0
        report.delta_used = 0.0
        report.pinv_iterations = pinv.iterations
        report.pinv_residual = pinv.residual
        if kern.padded:
            report.flags.append("padded")
        if not pinv.converged:
            report.flags.append("pinv_not_converged")
        if pinv.init_condition_violated:
            report.flags.append("pinv_init_condition_violated")
        if args.materialize:
            s_tilde = nystrom_attention_materialized(p, m, state=(kern, pinv))
            _materialized_metrics(report, p, out, s_tilde, kern.a_s, 0.0, pinv.z)
    else:
        cfg = SSAttentionConfig(
            m=m,
            pinv_mode=pinv_mode,
            pinv_iters=args.iters,
            delta_mode=delta_mode,
            delta_value=delta_value,
            diag_shift=args.diag_shift,
            verify=args.materialize,
            desk_scale=DESK_SCALE if not args.force else max(DESK_SCALE, p.n),
        )
        state = prepare(p, cfg)
        out = ss_attention(p, cfg, state=state)
        report.runtimes.update(state.timings)
        report.runtimes["total"] = time.perf_counter() - t0
        report.pinv_mode = pinv_mode
        report.delta_used = state.delta
        report.pinv_iterations = state.pinv_iterations
        report.pinv_residual = state.pinv_residual
        report.flags.extend(state.flags)
        if args.materialize:
            s_tilde = ss_attention_materialized(p, cfg, state=state)
            _materialized_metrics(report, p, out, s_tilde, state.kernels.a_s, state.delta, state.z)
    if args.save_output:
        write_matrix(args.save_output, out)
    _emit_json(report.to_dict(), args.out)
    return EXIT_OK


def _materialized_metrics(report, p, out, s_tilde, a_s, delta, z) -> None:
    s = exact_scores(p)
    report.record_errors(s, s_tilde)
    report.rank_s_tilde = numerical_rank(s_tilde)
    report.row_sum_deviation = row_sum_deviation(s_tilde)
    exact_out = s @ p.v
    report.output_err_frobenius_rel = float(np.linalg.norm(out - exact_out) / np.linalg.norm(exact_out))
    report.bound_value = analysis.error_bound(a_s, delta, z)
    report.bound_respected = bool(report.err_inf_induced <= report.bound_value)
    if not report.bound_respected:
        report.flags.append("bound_violated")


# -- spectrum -----------------------------------------------------------------


def _write_spectrum_csv(path: str, rep: analysis.SpectrumReport) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value", "cumulative"])
        for i, v, c in rep.rows():
            w.writerow([i, f"{v:.17g}", f"{c:.17g}"])


def cmd_spectrum(args) -> int:
    _check_desk(args.n, args.force, "spectrum")
    p = AttentionProblem.random(args.n, args.d, args.seed)
    m = min(args.m, p.n)
    delta_mode, delta_value = args.delta_mode
    cfg = SSAttentionConfig(m=m, delta_mode=delta_mode, delta_value=delta_value, diag_shift=args.diag_shift)
    exact_rep = analysis.spectrum_report(exact_scores(p), "exact")
    approx_rep = analysis.spectrum_report(ss_attention_materialized(p, cfg), "approx")
    _write_spectrum_csv(f"{args.out_prefix}_exact.csv", exact_rep)
    _write_spectrum_csv(f"{args.out_prefix}_approx.csv", approx_rep)
    return EXIT_OK


# -- bench --------------------------------------------------------------------


def cmd_bench(args) -> int:
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    for meth in methods:
        if meth not in ("exact", "nystrom", "ss"):
            raise UsageError(f"unknown method {meth!r} in --methods")
    n_list = args.n_list
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise UsageError(f"--n-list must be strictly ascending, got {n_list}")
    if "exact" in methods and n_list[-1] > EXACT_BENCH_LIMIT and not args.force:
        raise UsageError(f"exact attention above n={EXACT_BENCH_LIMIT} needs --force")
    if any(meth != "exact" for meth in methods) and n_list[0] < args.m:
        raise UsageError(f"every n must be >= --m ({args.m})")
    result = analysis.scaling_study(
        args.d, args.m, n_list, trials=args.trials, seed=args.seed, methods=methods, threads=args.threads
    )
    rows = [(meth, n, t) for meth in methods for n, t in zip(result.n_lists[meth], result.medians[meth])]
    if args.csv:
        fh = open(args.csv, "w", newline="", encoding="ascii")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "n", "median_seconds"])
        for meth, n, t in rows:
            w.writerow([meth, n, f"{t:.9g}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    payload = result.to_dict()
    if args.json:
        _emit_json(payload, args.json)
    else:
        print(json.dumps(payload, indent=2), file=sys.stderr)
    return EXIT_OK


# -- lemma1 -------------------------------------------------------------------


def cmd_lemma1(args) -> int:
    if args.head_eigs is not None:
        if args.k is not None and args.k != len(args.head_eigs):
            raise UsageError(f"--k {args.k} disagrees with {len(args.head_eigs)} --head-eigs values")
        spec = FlatTailSpec(args.n, args.theta, tuple(args.head_eigs), args.seed)
    else:
        if args.k is None:
            raise UsageError("--k or --head-eigs is required")
        spec = FlatTailSpec.random(args.n, args.k, args.theta, args.seed, top=max(10.0, 10 * args.theta))
    if args.c < spec.k:
        raise UsageError(f"--c {args.c} must be >= --k {spec.k}")
    rep = flat_tail_check(spec, args.c)
    payload = rep.to_dict()
    payload.update(schema_version=analysis.SCHEMA_VERSION, kind="lemma1_report", seed=args.seed)
    _emit_json(payload, args.out)
    return EXIT_OK


# -- bound --------------------------------------------------------------------


def bound_instance(n: int, d: int, m: int, seed: int, iters: int) -> dict:
    """Empirical inf-norm error of the iterative-pseudoinverse approximation
    next to the a-priori bound, for one random problem."""
    p = AttentionProblem.random(n, d, seed)
    cfg = SSAttentionConfig(m=m, pinv_mode="iterative", pinv_iters=iters, verify=True)
    state = prepare(p, cfg)
    s_tilde = ss_attention_materialized(p, cfg, state=state)
    empirical = norm(exact_scores(p) - s_tilde, "inf_induced")
    bound = analysis.error_bound(state.kernels.a_s, state.delta, state.z)
    return {
        "seed": seed,
        "empirical_E": empirical,
        "bound_value": bound,
        "respected": bool(empirical <= bound),
        "delta_used": state.delta,
        "pinv_iterations": state.pinv_iterations,
        "pinv_residual": state.pinv_residual,
        "flags": state.flags,
    }


def cmd_bound(args) -> int:
    _check_desk(args.n, False, "bound")
    if args.m > args.n:
        raise UsageError(f"--m {args.m} exceeds --n {args.n}")
    seeds = [args.seed + i for i in range(args.instances)]
    run = lambda s: bound_instance(args.n, args.d, args.m, s, args.iters)  # noqa: E731
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            instances = list(pool.map(run, seeds))
    else:
        instances = [run(s) for s in seeds]
    payload = {
        "schema_version": analysis.SCHEMA_VERSION,
        "kind": "bound_report",
        "n": args.n,
        "d": args.d,
        "m": args.m,
        "iters": args.iters,
        "instances": instances,
        "respected_count": sum(inst["respected"] for inst in instances),
        "violated_count": sum(not inst["respected"] for inst in instances),
    }
    if len(instances) == 1:
        payload.update({key: instances[0][key] for key in ("empirical_E", "bound_value", "respected")})
    _emit_json(payload, args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssattn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    ap = sub.add_parser("approx", help="run one attention method and report errors")
    ap.add_argument("--method", choices=["exact", "nystrom", "ss"], default="ss")
    ap.add_argument("--n", type=_positive_int)
    ap.add_argument("--d", type=_positive_int)
    ap.add_argument("--m", type=_positive_int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--q")
    ap.add_argument("--k")
    ap.add_argument("--v")
    ap.add_argument("--pinv", choices=["svd", "iterative"], help="default: svd with --materialize, else iterative")
    ap.add_argument("--iters", type=_positive_int, default=30)
    ap.add_argument("--delta-mode", type=_delta_mode, default=("paper_formula", 0.0), help="paper | fixed=<v> | oracle")
    ap.add_argument("--diag-shift", choices=["omit", "include"], default="omit")
    ap.add_argument("--materialize", action="store_true", help="compare against exact scores (n <= 4096)")
    ap.add_argument("--force", action="store_true")
    ap.add_argument("--save-output", help="write the n x d_v output (.csv or MAT1)")
    ap.add_argument("--out", help="JSON report path (default stdout)")
    ap.set_defaults(func=cmd_approx)

    sp = sub.add_parser("spectrum", help="write exact and approximate spectra as CSV")
    sp.add_argument("--n", type=_positive_int, default=256)
    sp.add_argument("--d", type=_positive_int, default=32)
    sp.add_argument("--m", type=_positive_int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--delta-mode", type=_delta_mode, default=("paper_formula", 0.0))
    sp.add_argument("--diag-shift", choices=["omit", "include"], default="omit")
    sp.add_argument("--out-prefix", default="spectrum")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_spectrum)

    bp = sub.add_parser("bench", help="time methods over sequence lengths and fit log-log slopes")
    bp.add_argument("--methods", default="exact,nystrom,ss")
    bp.add_argument("--n-list", type=_int_list, required=True)
    bp.add_argument("--d", type=_positive_int, default=64)
    bp.add_argument("--m", type=_positive_int, default=64)
    bp.add_argument("--trials", type=int, default=3, choices=range(3, 101), metavar="{3..100}")
    bp.add_argument("--threads", type=_positive_int, default=_default_threads())
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--force", action="store_true")
    bp.add_argument("--csv", help="CSV path (default stdout)")
    bp.add_argument("--json", help="JSON slopes path (default stderr)")
    bp.set_defaults(func=cmd_bench)

    lp = sub.add_parser("lemma1", help="exact reconstruction of a flat-tail matrix vs Nyström")
    lp.add_argument("--n", type=_positive_int, default=256)
    lp.add_argument("--k", type=int)
    lp.add_argument("--theta", type=float, default=0.5)
    lp.add_argument("--c", type=_positive_int, required=True)
    lp.add_argument("--seed", type=int, default=0)
    lp.add_argument("--head-eigs", type=_float_list)
    lp.add_argument("--out")
    lp.set_defaults(func=cmd_lemma1)

    bd = sub.add_parser("bound", help="empirical inf-norm error against the a-priori bound")
    bd.add_argument("--n", type=_positive_int, default=256)
    bd.add_argument("--d", type=_positive_int, default=32)
    bd.add_argument("--m", type=_positive_int, default=32)
    bd.add_argument("--seed", type=int, default=0)
    bd.add_argument("--iters", type=_positive_int, default=30)
    bd.add_argument("--instances", type=_positive_int, default=1)
    bd.add_argument("--threads", type=_positive_int, default=_default_threads())
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_bound)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(json.dumps({"error": str(exc), "flags": ["numerical_failure", type(exc).__name__]}))
        return EXIT_NUMERICAL
    except (MatrixIOError, OSError) as exc:
        print(f"ssattn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"ssattn: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
