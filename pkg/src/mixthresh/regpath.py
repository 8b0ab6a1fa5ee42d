"""Regularization schedules and noise-level sweeps.

Along a schedule of noise levels ``eps_t -> 0`` the group multipliers
``alpha_i(eps_t)`` must tend to zero, ``eps_t**2 / alpha_i(eps_t)`` must tend to
zero, and all ratios ``alpha_i / alpha_j`` must tend to one.  Under these
conditions the regularized minimizers for data within ``eps_t`` of ``K f0``
converge to the penalty-minimal element of ``{f : K f = K f0}``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Problem
from .operators import LinearOp, renormalize
from .oracle import zoom_minimize
from .solver import StopRule, solve

__all__ = [
    "Schedule",
    "ScheduleError",
    "RegRecord",
    "RegReport",
    "make_schedule",
    "validate_schedule",
    "is_injective",
    "nullspace_basis",
    "minimal_element",
    "run_regpath",
    "level_noise",
]

NOISE_FRACTION = 0.9
REPORT_COLUMNS = ("level", "eps", "alpha", "noise_norm", "error", "iters")


class ScheduleError(ValueError):
    """A schedule violates one of the limit conditions."""


@dataclass(frozen=True, eq=False)
class Schedule:
    levels: np.ndarray
    alphas: np.ndarray  # shape (count, n_groups)

    def __len__(self):
        return self.levels.size


def validate_schedule(schedule: Schedule) -> None:
    """Raise :class:`ScheduleError` naming the first violated condition."""
    eps = np.asarray(schedule.levels, dtype=float)
    al = np.asarray(schedule.alphas, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise ScheduleError("schedule needs at least one noise level")
    if al.shape[0] != eps.size or al.ndim != 2 or al.shape[1] == 0:
        raise ScheduleError("alphas must have one row per noise level")
    if np.any(eps <= 0) or np.any(al <= 0):
        raise ScheduleError("noise levels and alphas must be positive")
    if np.any(np.diff(eps) >= 0):
        raise ScheduleError("noise levels eps_t must be strictly decreasing")
    if np.any(np.diff(al, axis=0) >= 0):
        raise ScheduleError("alpha_i(eps_t) must decrease toward 0")
    ratio = eps[:, None] ** 2 / al
    if np.any(np.diff(ratio, axis=0) >= 0):
        raise ScheduleError("eps_t^2 / alpha_i(eps_t) must decrease toward 0")
    spread = np.max(np.abs(al[:, :, None] / al[:, None, :] - 1.0), axis=(1, 2))
    if np.any(np.diff(spread) > 0):
        raise ScheduleError("max |alpha_i/alpha_j - 1| must be nonincreasing")


def make_schedule(eps0: float, ratio: float, count: int, exponent: float, n_groups: int = 1) -> Schedule:
    """``eps_t = eps0 * ratio**t`` and ``alpha_i(eps_t) = eps_t**exponent`` for t < count."""
    if not eps0 > 0:
        raise ScheduleError("eps0 must be positive")
    if not 0 < ratio < 1:
        raise ScheduleError("ratio must lie in (0, 1)")
    if count < 1:
        raise ScheduleError("count must be at least 1")
    if not exponent > 0:
        raise ScheduleError("exponent must be positive so that alpha -> 0")
    if exponent >= 2:
        raise ScheduleError(
            f"exponent {exponent} >= 2 makes eps^2/alpha fail to tend to 0; need exponent < 2"
        )
    eps = eps0 * ratio ** np.arange(count)
    alphas = np.repeat((eps ** exponent)[:, None], n_groups, axis=1)
    sched = Schedule(eps, alphas)
    validate_schedule(sched)
    return sched


def is_injective(op: LinearOp, rtol: float = 1e-10) -> bool:
    """Smallest singular value above ``rtol`` times the largest (dense check)."""
    A = op.to_dense()
    if A.shape[0] < A.shape[1]:
        return False
    s = np.linalg.svd(A, compute_uv=False)
    return bool(s[-1] > rtol * max(s[0], 1e-300))


def nullspace_basis(op: LinearOp, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of N(K) as columns (dense SVD)."""
    A = op.to_dense()
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rtol * max(s[0], 1e-300))) if s.size else 0
    return vt[rank:].T.copy()


def minimal_element(prob_shape: Problem, f0, nullspace: Optional[np.ndarray] = None,
                    points: int = 0, rounds: int = 10) -> np.ndarray:
    """Penalty-minimal element of ``{f : K f = K f0}``.

    For an injective operator this is ``f0``.  Otherwise the penalty is
    minimized over ``f0 + N z`` by a grid search in the (at most three)
    nullspace coordinates ``z``; ``nullspace`` must then hold an orthonormal
    basis of N(K) as columns.
    """
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (prob_shape.dim,):
        raise ValueError("f0 does not match the operator domain")
    if nullspace is None:
        if is_injective(prob_shape.operator):
            return f0.copy()
        raise ValueError("operator is not injective; pass an orthonormal nullspace basis")
    N = np.asarray(nullspace, dtype=float)
    if N.ndim != 2 or N.shape[0] != prob_shape.dim:
        raise ValueError("nullspace basis must have shape (dim, d)")
    d = N.shape[1]
    if d == 0:
        return f0.copy()
    if d > 3:
        raise ValueError(f"nullspace dimension {d} exceeds 3")
    pen = prob_shape.penalty
    W, P = pen.weights, pen.exponents
    # z = N^T (f - f0) and any f with penalty <= penalty(f0) has bounded entries
    budget = pen.value(f0)
    radius = np.array([min((budget / w) ** (1.0 / p) for w, p in zip(W[j], P[j]) if w > 0)
                       for j in range(pen.size)])
    zmax = float(np.linalg.norm(radius) + np.linalg.norm(f0)) + 1.0
    points = points or {1: 2001, 2: 201, 3: 41}[d]

    def pen_batch(Z):
        F = f0[None, :] + Z @ N.T
        return np.sum(W[None] * np.abs(F)[:, :, None] ** P[None], axis=(1, 2))

    z = zoom_minimize(pen_batch, -zmax * np.ones(d), zmax * np.ones(d), points, rounds)
    return f0 + N @ z


def level_noise(codomain_dim: int, eps: float, seed: int, level: int) -> np.ndarray:
    """Seeded Gaussian noise rescaled to norm ``0.9 * eps``."""
    rng = np.random.default_rng([int(seed), int(level)])
    e = rng.standard_normal(codomain_dim)
    nrm = np.linalg.norm(e)
    if nrm == 0.0:
        e = np.ones(codomain_dim)
        nrm = np.linalg.norm(e)
    return e * (NOISE_FRACTION * eps / nrm)


@dataclass(frozen=True)
class RegRecord:
    level: int
    eps: float
    alpha: tuple
    noise_norm: float
    error: float
    iters: int


@dataclass
class RegReport:
    records: list = field(default_factory=list)
    f_dagger: Optional[np.ndarray] = None
    target_error: Optional[float] = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    def trend_ok(self) -> bool:
        """Final error no larger than the first (and below the target, if set)."""
        e = self.errors
        ok = bool(e[-1] <= e[0])
        if self.target_error is not None:
            ok = ok and bool(e[-1] <= self.target_error)
        return ok

    def tail_nonincreasing(self, tail: int = 3, slack: float = 0.10) -> bool:
        """Each of the last ``tail`` errors is at most (1 + slack) times its predecessor."""
        e = self.errors[-tail:]
        return bool(np.all(e[1:] <= (1.0 + slack) * e[:-1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.records:
            w.writerow([r.level, repr(float(r.eps)), repr(float(r.alpha[0])),
                        repr(float(r.noise_norm)), repr(float(r.error)), r.iters])
        return buf.getvalue()


def run_regpath(
    f0,
    prob_shape: Problem,
    schedule: Schedule,
    noise_seed: int,
    stop: Optional[StopRule] = None,
    nullspace: Optional[np.ndarray] = None,
    target_error: Optional[float] = None,
) -> RegReport:
    """Solve along ``schedule`` with noisy data ``K f0 + e_t``, ``||e_t|| = 0.9 eps_t``.

    ``prob_shape`` supplies the operator and the base penalty; its data is
    ignored.  The penalty multipliers at level ``t`` are ``alphas[t]``.
    Errors are measured against :func:`minimal_element`.
    """
    validate_schedule(schedule)
    f0 = np.asarray(f0, dtype=float)
    K, pen = prob_shape.operator, prob_shape.penalty
    if schedule.alphas.shape[1] != pen.n_groups:
        raise ScheduleError(
            f"schedule has {schedule.alphas.shape[1]} alphas per level, penalty has {pen.n_groups} groups"
        )
    if not (pen.any_exponent_above_one or is_injective(K)):
        raise ValueError("uniqueness needs some exponent > 1 or an injective operator")
    stop = stop or StopRule(max_iters=100_000, step_tol=1e-12)
    f_dag = minimal_element(prob_shape, f0, nullspace)
    Kf0 = K.forward(f0)
    report = RegReport(f_dagger=f_dag, target_error=target_error)
    for t, (eps, alpha) in enumerate(zip(schedule.levels, schedule.alphas)):
        e = level_noise(K.codomain_dim, eps, noise_seed, t)
        prob = Problem(K, Kf0 + e, pen.with_multipliers(alpha))
        prob, _ = renormalize(prob)
        f_star, trace = solve(None, prob, stop)
        report.records.append(RegRecord(
            level=t, eps=float(eps), alpha=tuple(float(a) for a in alpha),
            noise_norm=float(np.linalg.norm(e)),
            error=float(np.linalg.norm(f_star - f_dag)), iters=trace.iterations,
        ))
    return report
