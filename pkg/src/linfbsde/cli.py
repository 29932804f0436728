"""Command-line front end: ``python3 -m linfbsde <command> FILE [flags]``.

Exit codes: 0 success, 2 input error, 3 undecided / nothing found,
4 numerical verification failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from .core import ConfigError, FBSDEEnvelope, FBSDEError, LinearFBSDE, LQProblem, ValidationError, load_config, to_document
from .criteria import NDegenerate, check_cor52, check_lemma38, check_monotonicity, check_thm39
from .dominating import integrate_dominating, integrate_dominating_envelope, l_poly, h_poly, real_roots
from .equivalence import EmptyGate, equiv_B, equiv_C, equiv_D, equiv_remark35, feasible_p, feasible_q, write_feasible_csv
from .lq import LQOptions, Unsolvable, build_hamiltonian, construction_discrepancy, field_gain, optimal_law, reference_params, solve_lq, stationarity_check
from .reference import PRINTED_HAMILTONIAN
from .solver import NotWellPosedNumerically, build_field, simulate, solve_and_verify, verify_bsde, write_paths_csv
from .transform import (
    DegenerateTransform,
    NoDecouplingRoot,
    NoTransformFound,
    SynthesisOptions,
    TerminalDegenerate,
    TransformParams,
    invert_solution,
    lambda_diagnostics,
    synthesize_transform,
    transform_system,
)

EXIT_OK, EXIT_INPUT, EXIT_UNDECIDED, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("linfbsde")


class InputError(Exception):
    pass


# ---------------------------------------------------------------- report rendering


def clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def emit_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False)


def parse_report(text: str) -> dict:
    return json.loads(text)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v + 0.0:.6g}"  # + 0.0 folds -0.0
    if isinstance(v, list):
        if len(v) > 12 and all(isinstance(x, list) for x in v):
            return f"<{len(v)} entries; see the JSON report>"
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _verdict_line(rec: dict) -> str:
    parts = []
    for e in rec["evidence"]:
        s = f"{e['name']}={_fmt(e['value'])}"
        if "relation" in e:
            s += f" {e['relation']} {_fmt(e['bound'])}"
        parts.append(s)
    return f"{rec['decided']} [{rec['criterion']}] " + ", ".join(parts)


def emit_human(report: dict, indent: int = 0) -> str:
    lines = []
    pad = "  " * indent
    for k, v in report.items():
        if isinstance(v, dict) and {"decided", "criterion", "evidence"} <= v.keys():
            lines.append(f"{pad}{k}: {_verdict_line(v)}")
        elif isinstance(v, dict):
            lines.append(f"{pad}{k}:")
            lines.append(emit_human(v, indent + 1))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            lines.append(f"{pad}{k}:")
            for item in v:
                if {"decided", "criterion", "evidence"} <= item.keys():
                    lines.append(f"{pad}  - {_verdict_line(item)}")
                else:
                    lines.append(f"{pad}  - " + ", ".join(f"{a}={_fmt(b)}" for a, b in item.items()))
        else:
            lines.append(f"{pad}{k}: {_fmt(v)}")
    return "\n".join(lines)


# ---------------------------------------------------------------- helpers


def _load(path: str, want: tuple[type, ...]):
    try:
        obj = load_config(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not isinstance(obj, want):
        names = " or ".join(t.__name__ for t in want)
        raise InputError(f"{path}: expected a {names} document, got {type(obj).__name__}")
    return obj


def _constant(obj) -> LinearFBSDE:
    if isinstance(obj, LQProblem):
        return build_hamiltonian(obj)
    if isinstance(obj, FBSDEEnvelope):
        raise InputError("this command needs constant coefficients, not intervals")
    return obj


def _params_from_flags(args, fb: LinearFBSDE) -> TransformParams | None:
    if args.m is None and args.n is None:
        return None
    if args.n is None:
        roots = real_roots(h_poly(fb.coeffs))
        if not roots:
            raise NoDecouplingRoot("H has no real root; pass --n explicitly")
        n = min(roots, key=lambda r: (abs(r), r > 0))
    else:
        n = args.n
    return TransformParams(1.0 if args.m is None else args.m, n, args.c)


def _synthesis(args) -> SynthesisOptions:
    return SynthesisOptions(c_grid=tuple(args.c_grid) if args.c_grid else (1.0,))


def _sim_block(sr, rep) -> dict:
    return {"summary": sr.to_record(), "verification": rep.to_record()}


# ---------------------------------------------------------------- commands


def cmd_analyze(args) -> tuple[dict, int]:
    obj = _load(args.file, (LinearFBSDE, FBSDEEnvelope, LQProblem))
    report: dict[str, Any] = {"input": to_document(obj)}
    if isinstance(obj, FBSDEEnvelope):
        env = integrate_dominating_envelope(obj, args.dt)
        report["envelope"] = {
            "upper_status": str(env.upper.status),
            "lower_status": str(env.lower.status),
            "upper_u0": env.upper.u0,
            "lower_u0": env.lower.u0,
            "well_posed": env.well_posed,
        }
        return report, EXIT_OK if env.well_posed else EXIT_UNDECIDED

    lq = obj if isinstance(obj, LQProblem) else None
    fb = _constant(obj)
    chain = [check_monotonicity(fb.coeffs, fb.h), check_lemma38(fb), check_thm39(fb)]
    if lq is not None:
        report["hamiltonian"] = to_document(fb)
        chain.append(check_cor52(lq))
    report["L"] = list(l_poly(fb.coeffs).coeffs())
    report["H"] = list(h_poly(fb.coeffs).coeffs())
    report["H_roots"] = real_roots(h_poly(fb.coeffs))
    report["verdicts"] = [v.to_record() for v in chain]
    ode = integrate_dominating(fb, args.dt)
    report["ode"] = {"status": str(ode.status), "u0": ode.u0}
    fired = [v.criterion for v in chain if v.well_posed]
    report["decided_by"] = fired
    return report, EXIT_OK if fired else EXIT_UNDECIDED


def cmd_equiv(args) -> tuple[dict, int]:
    fb = _constant(_load(args.file, (LinearFBSDE, LQProblem)))
    report: dict[str, Any] = {"input": to_document(fb)}
    if args.search:
        fn = feasible_p if args.search == "p" else feasible_q
        try:
            pts = fn(fb.coeffs, fb.h, args.lo, args.hi, args.step)
        except EmptyGate as exc:
            report["search"] = {"family": args.search, "error": str(exc)}
            return report, EXIT_UNDECIDED
        report["search"] = {
            "family": args.search,
            "count": len(pts),
            "min": pts[0].param if pts else None,
            "max": pts[-1].param if pts else None,
        }
        if args.csv:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                write_feasible_csv(pts, args.search, fh)
            report["search"]["csv"] = args.csv
        return report, EXIT_OK if pts else EXIT_UNDECIDED

    if args.remark:
        val = args.p if args.remark == "B" else args.q
        if val is None:
            raise InputError(f"--remark {args.remark} needs --{'p' if args.remark == 'B' else 'q'}")
        em = equiv_remark35(fb.coeffs, args.remark, val)
    elif args.p is not None and args.q is not None:
        em = equiv_D(fb.coeffs, args.p, args.q)
    elif args.p is not None:
        em = equiv_B(fb.coeffs, args.p)
    elif args.q is not None:
        em = equiv_C(fb.coeffs, args.q)
    else:
        raise InputError("equiv needs --p, --q, --remark or --search")
    mono = check_monotonicity(em.matrix, fb.h)
    report["equivalent"] = {"kind": em.kind, "params": list(em.params), "matrix": em.matrix.matrix().tolist()}
    report["monotonicity"] = mono.to_record()
    report["L_preserved"] = list(l_poly(em.matrix).coeffs())
    return report, EXIT_OK if mono.well_posed else EXIT_UNDECIDED


def _transform_report(fb: LinearFBSDE, ts) -> dict:
    rec = ts.to_record()
    rec["z_map"] = list(ts.z_map)
    rec["x0_relation"] = list(ts.x0_relation)
    rec["inverse"] = ts.params.inverse().tolist()
    rec["L_tilde"] = list(l_poly(ts.tilde.coeffs).coeffs())
    rec["lambda_diagnostics"] = lambda_diagnostics(fb.coeffs, ts.params)
    return rec


def cmd_transform(args) -> tuple[dict, int]:
    fb = _constant(_load(args.file, (LinearFBSDE, LQProblem)))
    report: dict[str, Any] = {"input": to_document(fb)}
    params = None if args.auto else _params_from_flags(args, fb)
    try:
        ts = transform_system(fb, params) if params else synthesize_transform(fb, _synthesis(args))
    except NoTransformFound as exc:
        report["error"] = str(exc)
        return report, EXIT_UNDECIDED
    report["transform"] = _transform_report(fb, ts)
    return report, EXIT_OK if ts.verdict.well_posed else EXIT_UNDECIDED


def cmd_solve(args) -> tuple[dict, int]:
    fb = _constant(_load(args.file, (LinearFBSDE, LQProblem)))
    report: dict[str, Any] = {"input": to_document(fb)}
    chain = [check_monotonicity(fb.coeffs, fb.h), check_lemma38(fb), check_thm39(fb)]
    report["verdicts"] = [v.to_record() for v in chain]
    decided = any(v.well_posed for v in chain)
    params = _params_from_flags(args, fb)
    want_transform = args.auto or params is not None

    if decided and not want_transform:
        sr, sr_half, rep = solve_and_verify(fb, args.paths, args.dt, args.seed)
        report["solution"] = _sim_block(sr, rep)
        if args.csv:
            sim = simulate(fb, build_field(fb, args.dt), min(args.paths, args.csv_paths), args.dt, args.seed, keep_paths=True)
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                write_paths_csv(sim.paths, fh)
        return report, EXIT_OK if rep.passed else EXIT_VERIFY

    if not want_transform:
        report["error"] = "no criterion decides this instance; rerun with --auto to search for a transform"
        return report, EXIT_UNDECIDED
    try:
        ts = transform_system(fb, params) if params else synthesize_transform(fb, _synthesis(args))
    except NoTransformFound as exc:
        report["error"] = str(exc)
        return report, EXIT_UNDECIDED
    report["transform"] = _transform_report(fb, ts)
    if not ts.verdict.well_posed:
        return report, EXIT_UNDECIDED
    tilde = ts.tilde
    fld = build_field(tilde, args.dt / 2)
    x0t = ts.tilde_x0(fld.u[0])
    sr = simulate(tilde, fld, args.paths, args.dt, args.seed, x0=x0t)
    sr_half = simulate(tilde, fld, args.paths, args.dt / 2, args.seed, x0=x0t)
    rep = verify_bsde(sr, sr_half)
    report["solution"] = _sim_block(sr, rep)
    report["solution"]["tilde_x0"] = x0t
    keep = simulate(tilde, fld, min(args.paths, args.csv_paths), args.dt, args.seed, x0=x0t, keep_paths=True).paths
    X, Y, Z = invert_solution(ts, keep.X, keep.Y, keep.Z)
    report["solution"]["original"] = {"Y0": float(Y[0, 0]), "X0": float(X[0, 0]), "mean_XT": float(X[:, -1].mean())}
    if args.csv:
        from .solver import Paths

        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            write_paths_csv(Paths(keep.t, X, Y, Z, keep.dW), fh)
    return report, EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_lq(args) -> tuple[dict, int]:
    lq = _load(args.file, (LQProblem,))
    law = optimal_law(lq)
    override = PRINTED_HAMILTONIAN if args.use_printed_fbsde else None
    mode = args.transform or ("always" if args.use_printed_fbsde else "auto")
    params = None if args.auto else _params_from_flags(args, override or build_hamiltonian(lq))
    if params is None and args.use_printed_fbsde and not args.auto:
        params = reference_params(PRINTED_HAMILTONIAN)
    opts = LQOptions(args.paths, args.dt, args.seed, override, mode, params, _synthesis(args))
    report: dict[str, Any] = {"input": to_document(lq), "law": {"kx": law.kx, "ky": law.ky, "kz": law.kz, "text": law.render()}}
    if override is not None:
        report["construction_discrepancy"] = construction_discrepancy(lq, override)
    try:
        sol = solve_lq(lq, opts)
    except Unsolvable as exc:
        report["error"] = str(exc)
        return report, EXIT_UNDECIDED
    report["hamiltonian"] = to_document(sol.fbsde)
    report["verdict_chain"] = [v.to_record() for v in sol.chain]
    if sol.transformed is not None:
        report["transform"] = _transform_report(sol.fbsde, sol.transformed)
    solved = sol.fbsde if sol.transformed is None else sol.transformed.tilde
    x0 = None if sol.transformed is None else sol.sim.x0
    sr, sr_half, rep = solve_and_verify(solved, args.paths, args.dt, args.seed, x0=x0)
    report["solution"] = _sim_block(sr, rep)
    report["solution"]["original"] = {"Y0": float(sol.y[0, 0]), "u0": float(sol.u[0, 0]), "mean_xT": float(sol.x[:, -1].mean())}
    code = EXIT_OK if rep.passed else EXIT_VERIFY

    if not args.no_stationarity:
        # stationarity is judged for the law of the Hamiltonian built from the LQ data
        ham = build_hamiltonian(lq)
        try:
            gain = field_gain(law, build_field(ham, args.dt))
            st = stationarity_check(lq, gain, tuple(args.eps), tuple(args.directions), args.paths, args.dt, args.seed)
            report["stationarity"] = st.to_record()
            if not st.passed:
                code = max(code, EXIT_VERIFY)
        except NotWellPosedNumerically as exc:
            report["stationarity"] = {"error": str(exc)}
            code = max(code, EXIT_VERIFY)
        if override is not None:
            diag = stationarity_check(lq, sol.gain, tuple(args.eps), ("one",), args.paths, args.dt, args.seed)
            report["stationarity_used_system"] = diag.to_record()
    if args.csv:
        n = min(args.csv_paths, sol.x.shape[0])
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            fh.write("path_id,t,X,Y,Z,U\n")
            for i in range(n):
                for j, t in enumerate(sol.t):
                    fh.write(f"{i},{t!r},{sol.x[i, j]!r},{sol.y[i, j]!r},{sol.z[i, j]!r},{sol.u[i, j]!r}\n")
    return report, code


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the report to this file instead of stdout")
    common.add_argument("--json", action="store_true", help="machine-readable JSON report")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--dt", type=float, default=1e-3)
    common.add_argument("--paths", type=int, default=10_000)
    common.add_argument("-v", "--verbose", action="store_true")

    tf = argparse.ArgumentParser(add_help=False)
    tf.add_argument("--m", type=float)
    tf.add_argument("--n", type=float)
    tf.add_argument("--c", type=float, default=1.0)
    tf.add_argument("--auto", action="store_true", help="synthesise (m, n, c) instead of using flags")
    tf.add_argument("--c-grid", type=float, nargs="+", help="c values scanned by --auto")

    p = argparse.ArgumentParser(prog="linfbsde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="run the well-posedness criteria")
    a.add_argument("file")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("equiv", parents=[common], help="equivalent coefficient matrices")
    e.add_argument("file")
    e.add_argument("--p", type=float)
    e.add_argument("--q", type=float)
    e.add_argument("--remark", choices=("B", "C"), help="variant that moves the shift onto f2 (B) or b1 (C)")
    e.add_argument("--search", choices=("p", "q"))
    e.add_argument("--lo", type=float, default=-10.0)
    e.add_argument("--hi", type=float, default=10.0)
    e.add_argument("--step", type=float, default=0.01)
    e.add_argument("--csv")
    e.set_defaults(func=cmd_equiv)

    t = sub.add_parser("transform", parents=[common, tf], help="linear change of variables")
    t.add_argument("file")
    t.set_defaults(func=cmd_transform)

    s = sub.add_parser("solve", parents=[common, tf], help="Monte-Carlo solution with residual checks")
    s.add_argument("file")
    s.add_argument("--csv")
    s.add_argument("--csv-paths", type=int, default=100, help="paths written to --csv")
    s.set_defaults(func=cmd_solve)

    q = sub.add_parser("lq", parents=[common, tf], help="LQ pipeline and stationarity check")
    q.add_argument("file")
    q.add_argument("--use-printed-fbsde", action="store_true",
                   help="replace the constructed Hamiltonian by the reference printed system")
    q.add_argument("--transform", choices=("auto", "always", "never"))
    q.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2])
    q.add_argument("--directions", nargs="+", default=["one", "ramp", "square"], choices=("one", "ramp", "square"))
    q.add_argument("--no-stationarity", action="store_true")
    q.add_argument("--csv")
    q.add_argument("--csv-paths", type=int, default=100)
    q.set_defaults(func=cmd_lq)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.dt <= 0 or args.paths < 1:
            raise InputError("--dt must be positive and --paths at least 1")
        report, code = args.func(args)
    except (InputError, ConfigError, ValidationError, DegenerateTransform, TerminalDegenerate,
            NDegenerate, NoDecouplingRoot, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NotWellPosedNumerically as exc:
        report, code = {"error": str(exc)}, EXIT_UNDECIDED
    except FBSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = clean({"command": args.command, **report, "exit_code": code})
    text = emit_json(report) if args.json else emit_human(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return code
