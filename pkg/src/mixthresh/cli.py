"""Command-line experiment runner.

    mixthresh shrink-table|solve|decompose|regpath --config PATH --out DIR [--seed N] [--quiet]

``--config`` takes a YAML file or the name of a bundled config (see
``mixthresh list``).  Exit codes: 0 success, 2 config error, 3 numerical
failure (objective increased by more than the monotonicity slack).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as C
from .model import Problem, objective, penalty_value
from .operators import renormalize
from .regpath import ScheduleError, is_injective, make_schedule, nullspace_basis, run_regpath
from .shrinkage import shrink_array
from .solver import (
    MONOTONE_SLACK,
    TRACE_COLUMNS,
    decomposition_problem,
    fixed_point_residual,
    solve,
    solve_decomposition,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# -- output helpers ----------------------------------------------------------

def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return repr(float(x))


def _vector_csv(values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("index", "value"))
    for i, v in enumerate(values):
        w.writerow((i, _fmt(v)))
    return buf.getvalue()


def _trace_csv(trace, scale2: float) -> str:
    """Trace with objective and surrogate reported in the original (unscaled) units."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for n, obj, sur, stp, nrm in zip(trace.iters, trace.objective, trace.surrogate,
                                     trace.step_norm, trace.iterate_norm):
        w.writerow((n, _fmt(obj * scale2), _fmt(sur * scale2), _fmt(stp), _fmt(nrm)))
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- shared config pieces ----------------------------------------------------

def _section(cfg, key, required=True):
    val = cfg.get(key)
    if val is None:
        if required:
            raise C.ConfigError(key, "missing required section")
        return {}
    if not isinstance(val, dict):
        raise C.ConfigError(key, "expected a mapping")
    return val


def _data(cfg, op, signal_op, seed):
    """Observed data and the generating signal (None for explicit data)."""
    if "data" in cfg:
        return C._vector(cfg["data"], "data", op.codomain_dim), None, 0.0
    if "signal" not in cfg:
        raise C.ConfigError("data", "give either explicit 'data' or a 'signal' section")
    sig = C.build_signal(_section(cfg, "signal"), signal_op.domain_dim, seed)
    g, noise_norm = C.add_noise(signal_op.forward(sig["signal"]), cfg.get("noise"), seed)
    return g, sig, noise_norm


def _initial(solver_cfg, n, key="f0"):
    val = solver_cfg.get(key, "zeros")
    if val in (None, "zeros"):
        return np.zeros(n)
    return C._vector(val, f"solver.{key}", n)


# -- commands ----------------------------------------------------------------

def cmd_shrink_table(cfg, out: Path, seed: int, log) -> int:
    sec = _section(cfg, "shrink")
    terms = C.build_terms(sec.get("terms"), "shrink.terms")
    lo = float(sec.get("b_min", -4.0))
    hi = float(sec.get("b_max", 4.0))
    points = int(sec.get("points", 81))
    if not lo < hi:
        raise C.ConfigError("shrink.b_min", "must be below shrink.b_max")
    if points < 2:
        raise C.ConfigError("shrink.points", "need at least 2 points")
    b = np.linspace(lo, hi, points)
    S = shrink_array(b, [t.weight for t in terms], [t.exponent for t in terms])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("b", "S"))
    for bi, si in zip(b, S):
        w.writerow((_fmt(bi), _fmt(si)))
    _write_atomic(out / "shrink_table.csv", buf.getvalue())
    log(f"wrote {points} rows to {out / 'shrink_table.csv'}")
    return EXIT_OK


def cmd_solve(cfg, out: Path, seed: int, log) -> int:
    op_cfg = _section(cfg, "operator")
    K = C.build_operator(op_cfg)
    pen = C.build_penalty(_section(cfg, "penalty"), K.domain_dim)
    g, sig, noise_norm = _data(cfg, K, C.signal_operator(op_cfg, K), seed)
    solver_cfg = _section(cfg, "solver", required=False)
    stop = C.build_stop(solver_cfg)
    f0 = _initial(solver_cfg, K.domain_dim)

    prob = Problem(K, g, pen)
    scaled, s = renormalize(prob)
    f, trace = solve(f0, scaled, stop)
    fpr = fixed_point_residual(f, scaled)
    violation = trace.monotone_violation() * s * s
    summary = {
        "command": "solve",
        "seed": seed,
        "dim": K.domain_dim,
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "step_tol": stop.step_tol,
        "scale": s,
        "final_objective": objective(f, prob),
        "fixed_point_residual": fpr,
        "monotone": violation <= MONOTONE_SLACK * s * s,
        "max_objective_increase": violation,
        "residual_norm": float(np.linalg.norm(K.forward(f) - g)),
        "noise_norm": noise_norm,
    }
    _write_atomic(out / "coefficients.csv", _vector_csv(f))
    _write_atomic(out / "trace.csv", _trace_csv(trace, s * s))
    frames = getattr(K, "frames", None)
    if frames is not None:
        blocks = np.split(f, np.cumsum(K.block_sizes)[:-1])
        recon = sum(F.forward(b) for F, b in zip(frames, blocks))
        _write_atomic(out / "reconstruction.csv", _vector_csv(recon))
        if sig is not None:
            summary["reconstruction_error"] = float(np.linalg.norm(recon - sig["signal"]))
    _write_atomic(out / "summary.json", _json(summary))
    log(f"solve: {trace.iterations} iterations ({trace.stop_reason}), "
        f"objective {summary['final_objective']:.6g}, fixed-point residual {fpr:.3g}")
    if not summary["monotone"]:
        print(f"numerical failure: objective increased by {violation:.3g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_decompose(cfg, out: Path, seed: int, log) -> int:
    op_cfg = _section(cfg, "operator")
    K = C.build_operator(op_cfg)
    n = K.domain_dim
    spec_u = C.build_penalty(_section(cfg, "penalty_u"), n, "penalty_u")
    spec_v = C.build_penalty(_section(cfg, "penalty_v"), n, "penalty_v")
    g, sig, noise_norm = _data(cfg, K, K, seed)
    solver_cfg = _section(cfg, "solver", required=False)
    stop = C.build_stop(solver_cfg)
    u0 = _initial(solver_cfg, n, "u0")
    v0 = _initial(solver_cfg, n, "v0")

    full = decomposition_problem(K, g, spec_u, spec_v)
    _, s = renormalize(full)
    c = 1.0 / (s * s)
    u, v, trace = solve_decomposition(u0, v0, K.scaled(1.0 / s), g / s,
                                      spec_u.scaled(c), spec_v.scaled(c), stop)
    scaled = decomposition_problem(K.scaled(1.0 / s), g / s, spec_u.scaled(c), spec_v.scaled(c))
    w = np.concatenate([u, v])
    violation = trace.monotone_violation() * s * s
    summary = {
        "command": "decompose",
        "seed": seed,
        "dim": n,
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "step_tol": stop.step_tol,
        "scale": s,
        "final_objective": objective(w, full),
        "fixed_point_residual": fixed_point_residual(w, scaled),
        "monotone": violation <= MONOTONE_SLACK * s * s,
        "max_objective_increase": violation,
        "residual_norm": float(np.linalg.norm(K.forward(u + v) - g)),
        "noise_norm": noise_norm,
        "penalty_u": penalty_value(u, spec_u),
        "penalty_v": penalty_value(v, spec_v),
        "u_norm": float(np.linalg.norm(u)),
        "v_norm": float(np.linalg.norm(v)),
    }
    _write_atomic(out / "u.csv", _vector_csv(u))
    _write_atomic(out / "v.csv", _vector_csv(v))
    _write_atomic(out / "sum.csv", _vector_csv(u + v))
    _write_atomic(out / "trace.csv", _trace_csv(trace, s * s))
    _write_atomic(out / "summary.json", _json(summary))
    log(f"decompose: {trace.iterations} iterations, ||K(u+v)-g|| = {summary['residual_norm']:.4g}, "
        f"||u|| = {summary['u_norm']:.4g}, ||v|| = {summary['v_norm']:.4g}")
    if not summary["monotone"]:
        print(f"numerical failure: objective increased by {violation:.3g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_regpath(cfg, out: Path, seed: int, log) -> int:
    op_cfg = _section(cfg, "operator")
    K = C.build_operator(op_cfg)
    pen = C.build_penalty(_section(cfg, "penalty"), K.domain_dim)
    sec = _section(cfg, "regpath")
    f0 = C._vector(sec.get("f0"), "regpath.f0", K.domain_dim)
    try:
        schedule = make_schedule(
            float(sec.get("eps0", 0.5)), float(sec.get("ratio", 0.5)),
            int(sec.get("count", 10)), float(sec.get("exponent", 1.0)), n_groups=pen.n_groups,
        )
    except ScheduleError as exc:
        field = "regpath.exponent" if "exponent" in str(exc) else "regpath"
        raise C.ConfigError(field, str(exc)) from None
    nullspace = None
    if not is_injective(K):
        if not pen.any_exponent_above_one:
            raise C.ConfigError("penalty", "uniqueness needs some exponent > 1 or an injective operator")
        nullspace = nullspace_basis(K)
        if nullspace.shape[1] > 3:
            raise C.ConfigError("operator", f"nullspace dimension {nullspace.shape[1]} exceeds 3")
    solver_cfg = _section(cfg, "solver", required=False)
    stop = C.build_stop({"step_tol": 1e-12, **solver_cfg})
    target = sec.get("target_error")
    report = run_regpath(f0, Problem(K, np.zeros(K.codomain_dim), pen), schedule, seed, stop,
                         nullspace=nullspace, target_error=None if target is None else float(target))
    e = report.errors
    summary = {
        "command": "regpath",
        "seed": seed,
        "levels": len(schedule),
        "first_error": float(e[0]),
        "final_error": float(e[-1]),
        "target_error": report.target_error,
        "trend_ok": report.trend_ok(),
        "tail_nonincreasing": report.tail_nonincreasing(),
        "f_dagger": [float(x) for x in report.f_dagger],
    }
    _write_atomic(out / "regpath.csv", report.to_csv())
    _write_atomic(out / "summary.json", _json(summary))
    log(f"regpath: error {e[0]:.4g} -> {e[-1]:.4g} over {len(schedule)} levels, "
        f"trend {'ok' if summary['trend_ok'] else 'NOT ok'}")
    return EXIT_OK


COMMANDS = {
    "shrink-table": cmd_shrink_table,
    "solve": cmd_solve,
    "decompose": cmd_decompose,
    "regpath": cmd_regpath,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixthresh", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config path or bundled config name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="list bundled configs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(C.bundled_configs()))
        return EXIT_OK
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = C.load_config(args.config)
        declared = cfg.get("experiment")
        if declared is not None and declared != args.command:
            raise C.ConfigError("experiment", f"config is for {declared!r}, not {args.command!r}")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        return COMMANDS[args.command](cfg, Path(args.out), seed, log)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # dimension and value checks raised while assembling the problem
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
