"""Scalar thresholding maps for sums of weighted power penalties.

For a single term the map sends ``b`` to the minimizer of

    M(x) = x**2 - 2*b*x + c*|x|**p

and for a list of terms ``(c_i, p_i)`` it minimizes
``x**2 - 2*b*x + sum_i c_i*|x|**p_i``.  Terms with ``p == 1`` create a dead zone
``|b| <= sum(c_i)/2`` mapped to zero; outside of it the magnitude of the result
solves

    x + tau + sum_{p_i > 1} (p_i*c_i/2) * x**(p_i - 1) = |b|,   x > 0,

with ``tau`` the half-sum of the ``p == 1`` weights.  The left side is increasing
on ``(0, inf)`` and convex in ``log(x)``, so Newton in the log variable started
from ``|b| - tau`` converges monotonically.

All entry points factor out the sign of ``b`` before solving, which makes the
maps exactly odd.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "PenaltyTerm",
    "eval_F",
    "eval_F_multi",
    "shrink_scalar",
    "shrink_multi",
    "shrink_array",
    "residual_bound",
]

_MAX_ROOT_ITERS = 300
_REL_TOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class PenaltyTerm:
    """One ``weight * |x|**exponent`` summand of a penalty."""

    weight: float
    exponent: float

    def __post_init__(self):
        w = float(self.weight)
        p = float(self.exponent)
        if not np.isfinite(w) or w <= 0:
            raise ValueError(f"penalty weight must be positive and finite, got {self.weight!r}")
        if not 1.0 <= p <= 2.0:
            raise ValueError(f"penalty exponent must lie in [1, 2], got {self.exponent!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "exponent", p)


def _as_term(term) -> PenaltyTerm:
    if isinstance(term, PenaltyTerm):
        return term
    return PenaltyTerm(*term)


def eval_F(x: float, term: PenaltyTerm) -> float:
    """Evaluate ``x + (c*p/2) * sign(x) * |x|**(p-1)``.

    This is the derivative of ``M/2`` shifted by ``b``; its inverse is the
    shrinkage map when ``p > 1``.
    """
    term = _as_term(term)
    x = float(x)
    if x == 0.0:
        return 0.0
    c, p = term.weight, term.exponent
    return x + 0.5 * c * p * np.sign(x) * abs(x) ** (p - 1.0)


def eval_F_multi(x: float, terms: Sequence[PenaltyTerm]) -> float:
    """Multi-term analogue of :func:`eval_F`.

    For ``x > 0`` this is the increasing branch used for positive inputs, for
    ``x < 0`` the mirrored one; a ``p == 1`` term contributes the constant
    ``c/2`` on either side.  Returns 0 at ``x == 0``.
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    s = 0.0
    for t in map(_as_term, terms):
        s += t.exponent * t.weight * abs(x) ** (t.exponent - 1.0)
    return x + np.sign(x) * 0.5 * s


def _solve_positive(r, coef, power):
    """Solve ``x + sum_j coef[:, j] * x**power[:, j] = r`` for ``0 < x <= r``.

    Works in ``s = log(x)``, where the residual is a positive combination of
    exponentials and therefore convex and increasing.  Newton started at
    ``log(r)`` then decreases monotonically onto the root, which keeps full
    relative precision even for roots many orders of magnitude below ``r``
    (exponents close to 1).  Each row is frozen once converged, so a row's
    result does not depend on the other rows in the batch.
    """
    s = np.log(r)
    live = np.arange(r.size)
    for _ in range(_MAX_ROOT_ITERS):
        if live.size == 0:
            break
        sl = s[live]
        c = coef[live]
        pw = power[live]
        terms = np.where(c > 0, c * np.exp(pw * sl[:, None]), 0.0)
        ex = np.exp(sl)
        H = ex + np.sum(terms, axis=1) - r[live]
        dH = ex + np.sum(pw * terms, axis=1)
        step = np.where(H > 0, H / dH, 0.0)
        s[live] = sl - step
        done = step <= _REL_TOL
        live = live[~done]
    return np.exp(s)


def shrink_array(b, weights, exponents) -> np.ndarray:
    """Apply the multi-term shrinkage map entrywise.

    Parameters
    ----------
    b : array_like, shape (m,)
        Inputs.
    weights, exponents : array_like, shape (m, k) or (k,)
        Per-entry term lists.  A weight of 0 marks a padding slot and is
        ignored, which lets ragged term lists share one array.

    Returns
    -------
    ndarray, shape (m,)
    """
    b = np.asarray(b, dtype=float)
    flat = b.reshape(-1)
    w = np.asarray(weights, dtype=float)
    p = np.asarray(exponents, dtype=float)
    if w.ndim == 1:
        w = np.broadcast_to(w, (flat.size, w.size))
        p = np.broadcast_to(p, (flat.size, p.size))
    else:
        w = w.reshape(flat.size, -1)
        p = p.reshape(flat.size, -1)

    linear = p == 1.0
    tau = 0.5 * np.sum(np.where(linear, w, 0.0), axis=1)
    mag = np.abs(flat)
    out = np.zeros_like(flat)
    active = np.nonzero(mag > tau)[0]
    if active.size:
        r = mag[active] - tau[active]
        pa = p[active]
        coef = np.where(linear[active], 0.0, 0.5 * w[active] * pa)
        # rows whose nonlinear terms are all quadratic have a linear equation
        closed = np.all((coef == 0) | (pa == 2.0), axis=1)
        x = r / (1.0 + np.sum(coef, axis=1))
        if not np.all(closed):
            hard = ~closed
            x[hard] = _solve_positive(r[hard], coef[hard], pa[hard] - 1.0)
        out[active] = x
    out = np.where(flat < 0, -out, out)
    return out.reshape(b.shape)


def shrink_scalar(b: float, term: PenaltyTerm) -> float:
    """Minimizer of ``x**2 - 2*b*x + c*|x|**p``.

    Soft thresholding at ``c/2`` for ``p == 1``; otherwise the inverse of
    :func:`eval_F`.
    """
    term = _as_term(term)
    return float(shrink_array([b], [[term.weight]], [[term.exponent]])[0])


def shrink_multi(b: float, terms: Sequence[PenaltyTerm]) -> float:
    """Minimizer of ``x**2 - 2*b*x + sum_i c_i*|x|**p_i``.

    Reduces to :func:`shrink_scalar` for a single term.
    """
    terms = [_as_term(t) for t in terms]
    if not terms:
        raise ValueError("shrink_multi needs at least one penalty term")
    w = [[t.weight for t in terms]]
    p = [[t.exponent for t in terms]]
    return float(shrink_array([b], w, p)[0])


def residual_bound(b: float, term: PenaltyTerm) -> tuple[float, float]:
    """Return ``(|S(b) - b|, (c*p/2)*|b|**(p-1))``; the first never exceeds the second."""
    term = _as_term(term)
    c, p = term.weight, term.exponent
    residual = abs(shrink_scalar(b, term) - b)
    # 0.0 ** 0.0 == 1.0, so p == 1 at b == 0 yields c/2
    bound = 0.5 * c * p * abs(float(b)) ** (p - 1.0)
    return residual, bound
