"""Brute-force reference minimizers for tests.

Nothing here calls the shrinkage maps or the solver.  Minimizers are located
by scanning a grid and repeatedly zooming in around the best point.  For a
strictly convex 1-D function the true minimizer always lies within one grid
cell of the best grid point, so a 10x zoom keeps it bracketed.

Bracket for ``M(x) = x**2 - 2 b x + sum c_i |x|**p_i``: the minimizer
has the sign of ``b`` and magnitude at most ``|b|`` (the map is nonexpansive
and sends 0 to 0), so ``[-(|b|+1), |b|+1]`` always contains it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import Problem
from .shrinkage import PenaltyTerm

__all__ = ["GridSpec", "minimize_M", "minimize_separable", "minimize_grid", "zoom_minimize"]


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    points: int = 1001
    refine_rounds: int = 8

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid needs lo < hi")
        if self.points < 101:
            raise ValueError("grid needs at least 101 points")
        if self.refine_rounds < 2:
            raise ValueError("grid needs at least 2 refine rounds")

    @classmethod
    def around(cls, b: float, points: int = 1001, refine_rounds: int = 8) -> "GridSpec":
        return cls(-(abs(b) + 1.0), abs(b) + 1.0, points, refine_rounds)


def zoom_minimize(
    fun: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    points: int,
    rounds: int,
) -> np.ndarray:
    """Minimize ``fun`` over a box by tensor-grid scans with 10x zooms.

    ``fun`` takes an array of shape (m, d) and returns m values.  After each
    scan the box is recentred on the best point with a tenth of its width.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    best = 0.5 * (lo + hi)
    for _ in range(rounds + 1):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = fun(mesh)
        best = mesh[int(np.argmin(vals))]
        half = (hi - lo) / 20.0
        lo, hi = best - half, best + half
    return best


def _M_values(x, b, terms):
    v = x * x - 2.0 * b * x
    for t in terms:
        v = v + t.weight * np.abs(x) ** t.exponent
    return v


def minimize_M(b: float, terms: Sequence[PenaltyTerm], grid: GridSpec | None = None) -> float:
    """Grid minimizer of ``x**2 - 2 b x + sum c_i |x|**p_i``.

    Accuracy is ``(hi - lo) * 10**-refine_rounds / points``.
    """
    terms = [t if isinstance(t, PenaltyTerm) else PenaltyTerm(*t) for t in terms]
    b = float(b)
    grid = grid or GridSpec.around(b)
    best = zoom_minimize(lambda X: _M_values(X[:, 0], b, terms), grid.lo, grid.hi,
                         grid.points, grid.refine_rounds)
    return float(best[0])


def minimize_separable(prob: Problem, points: int = 1001, refine_rounds: int = 8) -> np.ndarray:
    """Coordinatewise grid minimizer for a diagonal operator.

    Coordinate ``j`` minimizes ``(k_j f - g_j)**2 + sum c |f|**p``.  For
    ``k_j != 0`` dividing by ``k_j**2`` turns this into ``M`` with
    ``b = g_j / k_j`` and weights ``c / k_j**2``; for ``k_j == 0`` the
    minimizer is 0.
    """
    diag = prob.operator.diagonal
    if diag is None:
        raise ValueError("minimize_separable needs an operator with known diagonal")
    out = np.zeros(prob.dim)
    for j, (k, g) in enumerate(zip(diag, prob.data)):
        if k == 0.0:
            continue
        terms = [PenaltyTerm(t.weight / k ** 2, t.exponent) for t in prob.penalty.terms_at(j)]
        b = g / k
        out[j] = minimize_M(b, terms, GridSpec.around(b, points, refine_rounds))
    return out


def minimize_grid(prob: Problem, grid: GridSpec | None = None) -> np.ndarray:
    """Tensor-grid minimizer of the objective for problems of dimension <= 2.

    The default box uses ``objective(f*) <= objective(0) = ||g||**2``: every
    penalty term then satisfies ``c |f_j|**p <= ||g||**2``.
    """
    n = prob.dim
    if n > 2:
        raise ValueError(f"minimize_grid handles at most 2 dimensions, got {n}")
    A = prob.operator.to_dense()
    g = prob.data
    W, P = prob.penalty.weights, prob.penalty.exponents
    if grid is None:
        budget = float(g @ g)
        radius = np.array([
            min((budget / w) ** (1.0 / p) for w, p in zip(W[j], P[j]) if w > 0)
            for j in range(n)
        ])
        lo, hi = -(radius + 1.0), radius + 1.0
        points, rounds = 201, 8
    else:
        lo, hi = np.full(n, grid.lo), np.full(n, grid.hi)
        points, rounds = grid.points, grid.refine_rounds

    def objective_batch(X):
        R = X @ A.T - g
        pen = np.sum(W[None] * np.abs(X)[:, :, None] ** P[None], axis=(1, 2))
        return np.sum(R * R, axis=1) + pen

    return zoom_minimize(objective_batch, lo, hi, points, rounds)
