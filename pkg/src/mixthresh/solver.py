"""Thresholded Landweber iteration ``f <- S(f + K*(g - K f))``.

Each step minimizes the surrogate functional around the current iterate, so
the objective is nonincreasing along the run.  The per-index shrinkage is the
single-term map for partitioned penalties and the multi-term map for stacked
ones; :meth:`PenaltySpec.shrink` dispatches on the term lists.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import PenaltySpec, Problem
from .operators import LinearOp, sum_space_op

__all__ = [
    "StopRule",
    "SolveTrace",
    "NotRenormalizedError",
    "step",
    "solve",
    "fixed_point_residual",
    "decomposition_problem",
    "solve_decomposition",
    "MONOTONE_SLACK",
]

MONOTONE_SLACK = 1e-9
TRACE_COLUMNS = ("iter", "objective", "surrogate", "step_norm", "iterate_norm")


class NotRenormalizedError(ValueError):
    """The operator's norm certificate is not below one."""


@dataclass(frozen=True)
class StopRule:
    """Stop after ``max_iters`` steps or once a step is at most ``step_tol``."""

    max_iters: int = 100_000
    step_tol: float = 1e-10
    record_every: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_tol < 0:
            raise ValueError("step_tol must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass
class SolveTrace:
    """Per-iteration record of a run.

    Row ``n`` holds ``objective(f^n)``, ``surrogate(f^{n+1}; f^n)``,
    ``||f^{n+1} - f^n||`` and ``||f^n||``.  With ``record_every > 1`` only
    every so many rows are kept (the last one always is).
    """

    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    iterate_norm: list = field(default_factory=list)
    stop_reason: str = ""
    iterations: int = 0
    final_objective: float = float("nan")
    max_iterate_norm: float = 0.0

    def _append(self, n, obj, sur, stp, nrm):
        self.iters.append(n)
        self.objective.append(obj)
        self.surrogate.append(sur)
        self.step_norm.append(stp)
        self.iterate_norm.append(nrm)

    def monotone_violation(self) -> float:
        """Largest increase of the objective between consecutive records (0 if none)."""
        obj = np.array(self.objective + [self.final_objective])
        obj = obj[np.isfinite(obj)]
        if obj.size < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(obj))))

    def is_monotone(self, slack: float = MONOTONE_SLACK) -> bool:
        return self.monotone_violation() <= slack

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in zip(self.iters, self.objective, self.surrogate, self.step_norm, self.iterate_norm):
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


def _require_renormalized(prob: Problem):
    if not prob.operator.norm_bound < 1.0:
        raise NotRenormalizedError(
            f"operator norm bound {prob.operator.norm_bound:.6g} is not below 1; call renormalize() first"
        )


def _as_vector(f, n, what="f"):
    f = np.asarray(f, dtype=float)
    if f.shape != (n,):
        raise ValueError(f"{what} has shape {f.shape}, expected ({n},)")
    return f


def step(f, prob: Problem) -> np.ndarray:
    """One thresholded Landweber step, the minimizer of the surrogate around ``f``."""
    _require_renormalized(prob)
    f = _as_vector(f, prob.dim)
    K = prob.operator
    h = f + K.adjoint(prob.data - K.forward(f))
    return prob.penalty.shrink(h)


def fixed_point_residual(f, prob: Problem) -> float:
    """``||T(f) - f||``; zero exactly at minimizers."""
    f = _as_vector(f, prob.dim)
    return float(np.linalg.norm(step(f, prob) - f))


def solve(
    f0,
    prob: Problem,
    stop: Optional[StopRule] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Iterate :func:`step` from ``f0`` until ``stop`` fires.

    Parameters
    ----------
    f0 : array_like or None
        Initial iterate; zeros when None.
    prob : Problem
        Must satisfy ``prob.operator.norm_bound < 1``.
    stop : StopRule, optional
    callback : callable, optional
        Called as ``callback(n, f_n)`` after each new iterate ``f_n``, n >= 1.

    Returns
    -------
    f : ndarray
        Last iterate.  When the step rule fires, ``||T(f) - f||`` is at most
        ``stop.step_tol``.
    trace : SolveTrace
    """
    _require_renormalized(prob)
    stop = stop or StopRule()
    K, g, pen = prob.operator, prob.data, prob.penalty
    f = np.zeros(prob.dim) if f0 is None else _as_vector(f0, prob.dim, "f0").copy()

    trace = SolveTrace()
    Kf = K.forward(f)
    r = Kf - g
    obj = float(r @ r) + pen.value(f)
    trace.max_iterate_norm = float(np.linalg.norm(f))
    trace.stop_reason = "max_iters"
    n = 0
    while n < stop.max_iters:
        f_new = pen.shrink(f + K.adjoint(-r))
        d = f_new - f
        Kf_new = K.forward(f_new)
        Kd = Kf_new - Kf
        r_new = Kf_new - g
        obj_new = float(r_new @ r_new) + pen.value(f_new)
        dd = float(d @ d)
        sur = obj_new + dd - float(Kd @ Kd)
        stp = np.sqrt(dd)
        nrm = float(np.linalg.norm(f))
        n += 1
        last = stp <= stop.step_tol or n >= stop.max_iters
        if (n - 1) % stop.record_every == 0 or last:
            trace._append(n - 1, obj, sur, stp, nrm)
        f, Kf, r, obj = f_new, Kf_new, r_new, obj_new
        trace.max_iterate_norm = max(trace.max_iterate_norm, float(np.linalg.norm(f)))
        if callback is not None:
            callback(n, f)
        if stp <= stop.step_tol:
            trace.stop_reason = "step_tol"
            break
    trace.iterations = n
    trace.final_objective = obj
    return f, trace


def decomposition_problem(K: LinearOp, g, spec_u: PenaltySpec, spec_v: PenaltySpec) -> Problem:
    """Problem on stacked ``(u, v)`` with operator ``L(u, v) = K(u + v)``."""
    if spec_u.size != K.domain_dim or spec_v.size != K.domain_dim:
        raise ValueError("both penalties must match the operator domain")
    return Problem(sum_space_op(K), g, PenaltySpec.concat(spec_u, spec_v))


def solve_decomposition(
    u0,
    v0,
    K: LinearOp,
    g,
    spec_u: PenaltySpec,
    spec_v: PenaltySpec,
    stop: Optional[StopRule] = None,
    callback=None,
) -> tuple[np.ndarray, np.ndarray, SolveTrace]:
    """Minimize ``||K(u + v) - g||**2 + pen_u(u) + pen_v(v)``.

    Both blocks shrink the same back-projected residual
    ``K*(g - K(u + v))`` added to their own current value.  ``sqrt(2)`` times
    the bound of ``K`` must be below one.
    """
    prob = decomposition_problem(K, g, spec_u, spec_v)
    n = K.domain_dim
    u0 = np.zeros(n) if u0 is None else _as_vector(u0, n, "u0")
    v0 = np.zeros(n) if v0 is None else _as_vector(v0, n, "v0")
    w, trace = solve(np.concatenate([u0, v0]), prob, stop, callback)
    return w[:n].copy(), w[n:].copy(), trace
