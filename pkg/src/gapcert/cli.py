"""Command-line front end: solve, scan, certify, ed, gradcheck.

Outputs are machine-readable and reproducible: one JSON record per line for
solves and certificates, CSV for parameter scans, with fixed row ordering
(row-major over the grid) regardless of worker scheduling.  Timing goes to
stderr so that output files are byte-identical across runs.

Exit codes: 0 success, 1 usage or configuration error, 2 certification
refusal, 3 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import criteria, oracle
from .certify import CertificateRefused, certified_solve, verify_certificate
from .models import ModelParams
from .sdp import SolveOpts, lti_gap

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _model_from_args(args) -> ModelParams:
    kw = {}
    if args.model == "potts":
        kw = dict(r=args.r, s=args.s)
    elif args.model == "glauber":
        kw = dict(gamma=args.gamma, delta=args.delta)
    elif args.model == "custom":
        if not args.file:
            raise ValueError("--model custom needs --file")
        kw = dict(file=args.file)
    return ModelParams(variant=args.model, **kw)


def _opts_from_args(args) -> SolveOpts:
    return SolveOpts(feas_tol=args.tol_feas, gap_tol=args.tol_gap)


def _emit(records, out):
    text = "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_method(params: ModelParams, method: str, n: int, opts: SolveOpts):
    """One (model, n, method) evaluation; returns a plain record dict."""
    h = params.make()
    rec = {"model": params.variant, "params": params.as_dict(), "n": n,
           "method": method, "tol_feas": opts.feas_tol, "tol_gap": opts.gap_tol}
    if method == "lti":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = lti_gap(h, n, opts)
        rec.update(value=sol.delta if np.isfinite(sol.delta) else None,
                   detected=sol.detected, status=sol.status,
                   primal_feas=sol.primal_feas if np.isfinite(sol.primal_feas) else None,
                   duality_gap=sol.duality_gap if np.isfinite(sol.duality_gap) else None,
                   gap_bound=sol.semantic)
    elif method in ("knabe", "gm"):
        fn = criteria.knabe if method == "knabe" else criteria.gm
        b = fn(h, n)
        rec.update(value=b.value, detected=b.detected, status="definitive",
                   epsilon_n=b.epsilon_n)
    elif method == "martingale":
        if n % 3 != 0:
            rec.update(value=None, detected=False, status="not_applicable")
        else:
            b = criteria.martingale(h, n // 3)
            rec.update(value=b.value, detected=b.detected, status="definitive",
                       epsilon_n=b.epsilon_n, eta=b.eta)
    elif method == "ed":
        data = oracle.spectrum(h, n, "periodic")
        rec.update(value=data.gap, detected=data.gap > 0, status="definitive",
                   e0=data.e0, degeneracies=list(data.degeneracies))
    else:
        raise ValueError(f"unknown method {method!r}")
    return rec


def cmd_solve(args) -> int:
    params = _model_from_args(args)
    opts = _opts_from_args(args)
    ns = sorted(int(x) for x in args.n.split(","))
    methods = args.method.split(",")
    records = []
    worst = EXIT_OK
    for n in ns:
        for method in methods:
            t0 = time.time()
            rec = _run_method(params, method, n, opts)
            print(f"# {params.variant} n={n} {method}: {time.time() - t0:.2f}s",
                  file=sys.stderr)
            records.append(rec)
            if rec.get("status") in ("numerical_failure",):
                worst = EXIT_SOLVER
    _emit(records, args.out)
    return worst


def _parse_grid(spec_list):
    """Parse ['r=0.2:1.0:5', 's=0.2:1.0:5'] into ordered (name, values)."""
    axes = []
    for spec in spec_list:
        name, _, rng = spec.partition("=")
        lo, hi, steps = rng.split(":")
        vals = np.linspace(float(lo), float(hi), int(steps))
        axes.append((name, [round(float(v), 12) for v in vals]))
    return axes


def _scan_task(task):
    (idx, variant, point, method, n, feas_tol, gap_tol) = task
    params = ModelParams(variant=variant, **point)
    try:
        rec = _run_method(params, method, n, SolveOpts(feas_tol=feas_tol, gap_tol=gap_tol))
        status = rec.get("status", "definitive")
        value, detected = rec.get("value"), rec.get("detected")
    except Exception as exc:  # record, never abort the scan
        status, value, detected = f"error:{type(exc).__name__}", None, False
    return idx, point, method, n, value, detected, status


def cmd_scan(args) -> int:
    if not args.grid:
        print("error: scan needs --grid", file=sys.stderr)
        return EXIT_USAGE
    axes = _parse_grid(args.grid)
    names = [a[0] for a in axes]
    methods = args.method.split(",")
    ns = sorted(int(x) for x in args.n.split(","))
    tasks = []
    idx = 0
    points = [{}]
    for name, vals in axes:
        points = [dict(p, **{name: v}) for p in points for v in vals]
    for point in points:                       # row-major grid order
        for method in methods:
            for n in ns:
                tasks.append((idx, args.model, point, method, n,
                              args.tol_feas, args.tol_gap))
                idx += 1
    jobs = args.jobs or int(os.environ.get("GAPCERT_JOBS", "1"))
    results = [None] * len(tasks)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_scan_task, tasks):
                results[res[0]] = res
    else:
        for task in tasks:
            res = _scan_task(task)
            results[res[0]] = res
    header = names + ["method", "n", "value", "detected", "status"]
    lines = [",".join(header)]
    for (_, point, method, n, value, detected, status) in results:
        row = [f"{point[name]:g}" for name in names]
        row += [method, str(n), "" if value is None else f"{value:.12g}",
                str(bool(detected)).lower(), status]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_certify(args) -> int:
    params = _model_from_args(args)
    opts = _opts_from_args(args)
    n = int(args.n)
    h = params.make()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cert = certified_solve(h, n, opts)
    except CertificateRefused as exc:
        print(f"certificate refused: {exc}", file=sys.stderr)
        for delta, lam in exc.history:
            print(f"#   delta={delta:.12g} lambda_min={lam:.3e}", file=sys.stderr)
        return EXIT_REFUSED
    checksum = hashlib.sha256(np.ascontiguousarray(cert.q.op.mat).tobytes()).hexdigest()
    record = {
        "model": params.variant, "params": params.as_dict(), "n": n,
        "delta_solver": cert.delta_solver, "delta_cert": cert.delta_cert,
        "lambda_residual": cert.lambda_residual,
        "correction_steps": cert.correction_steps,
        "tolerances": {"feas": opts.feas_tol, "gap": opts.gap_tol},
        "q_checksum": checksum, "arithmetic": cert.arithmetic,
    }
    if args.verify:
        record["resummation_min_eig"] = verify_certificate(h, cert)
    _emit([record], args.out)
    print(f"delta_cert = {cert.delta_cert:.12g}", file=sys.stderr)
    print(f"lambda_residual = {cert.lambda_residual:.6e}", file=sys.stderr)
    return EXIT_OK


def cmd_ed(args) -> int:
    params = _model_from_args(args)
    h = params.make()
    data = oracle.spectrum(h, int(args.n), args.boundary)
    rec = {"model": params.variant, "params": params.as_dict(), "N": data.N,
           "boundary": data.boundary, "e0": data.e0, "gap": data.gap,
           "degeneracies": list(data.degeneracies)}
    _emit([rec], args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .grad import ParamFamily, central_difference, gap_gradient, solve_family

    params = _model_from_args(args)
    h = params.make()
    n = int(args.n)
    family = ParamFamily.random(h, args.directions, seed=args.seed)
    opts = _opts_from_args(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve_family(family, n, opts)
        grad = gap_gradient(sol, family, n)
        records = []
        worst = 0.0
        for alpha in range(args.directions):
            e = np.zeros(args.directions)
            e[alpha] = 1.0
            fd = central_difference(family, n, e, step=args.fd_step, opts=opts)
            rel = abs(grad[alpha] - fd) / max(abs(fd), 1e-12)
            worst = max(worst, rel)
            records.append({"direction": alpha, "formula": grad[alpha],
                            "finite_difference": fd, "rel_error": rel})
    _emit(records, args.out)
    print(f"max relative error = {worst:.3e}", file=sys.stderr)
    return EXIT_OK if worst <= args.grad_tol else EXIT_SOLVER


def build_parser() -> _Parser:
    p = _Parser(prog="gapcert",
                description="certified spectral-gap lower bounds for "
                            "translation-invariant frustration-free spin chains")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_required=True):
        sp.add_argument("--model", required=True,
                        choices=["aklt", "potts", "glauber", "custom"])
        sp.add_argument("--r", type=float, default=1.0)
        sp.add_argument("--s", type=float, default=1.0)
        sp.add_argument("--gamma", type=float, default=0.0)
        sp.add_argument("--delta", type=float, default=0.0)
        sp.add_argument("--file", help="custom-term container (JSON)")
        sp.add_argument("--tol-feas", type=float, default=1e-9)
        sp.add_argument("--tol-gap", type=float, default=1e-7)
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        if n_required:
            sp.add_argument("--n", required=True,
                            help="window size(s), comma separated")

    sp = sub.add_parser("solve", help="run methods at one or more window sizes")
    common(sp)
    sp.add_argument("--method", default="lti",
                    help="comma separated subset of lti,knabe,gm,martingale,ed")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("scan", help="parameter-grid scan, CSV output")
    common(sp)
    sp.add_argument("--method", default="lti")
    sp.add_argument("--grid", nargs="+",
                    help="axes like r=0.2:1.0:5 s=0.2:1.0:5 (row-major order)")
    sp.add_argument("--jobs", type=int, default=0,
                    help="worker processes (default: GAPCERT_JOBS or 1)")
    sp.set_defaults(fn=cmd_scan)

    sp = sub.add_parser("certify", help="strictly verified lower bound at one level")
    common(sp)
    sp.add_argument("--verify", action="store_true",
                    help="also run the independent resummation check")
    sp.set_defaults(fn=cmd_certify)

    sp = sub.add_parser("ed", help="exact diagonalisation of a finite chain")
    common(sp)
    sp.add_argument("--boundary", choices=["periodic", "open"], default="periodic")
    sp.set_defaults(fn=cmd_ed)

    sp = sub.add_parser("gradcheck", help="gradient formula vs finite differences")
    common(sp)
    sp.add_argument("--directions", type=int, default=5)
    sp.add_argument("--fd-step", type=float, default=1e-4)
    sp.add_argument("--grad-tol", type=float, default=1e-3)
    sp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
