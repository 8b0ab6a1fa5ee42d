"""Coefficient-space problem model.

A penalty is stored as per-index term lists.  Every coefficient ``f[j]``
carries one or more ``(weight, exponent)`` terms, padded to a rectangular
``(n, k)`` array with zero weights.  A partitioned penalty (each index belongs
to one group with its own exponent) has ``k == 1``; a stacked penalty (every
index carries all exponents at once) has ``k == n_groups``.  Each term slot
records the group it belongs to, so group multipliers can be changed without
rebuilding the structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .shrinkage import PenaltyTerm, shrink_array

__all__ = [
    "PenaltySpec",
    "Problem",
    "penalty_value",
    "objective",
    "surrogate",
]


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """Weighted power penalty ``sum_j sum_terms c * |f_j|**p``.

    Attributes
    ----------
    base_weights : ndarray, shape (n, k)
        Weights before multipliers; 0 marks a padding slot.
    exponents : ndarray, shape (n, k)
        Exponents in [1, 2] (padding slots hold 1).
    groups : ndarray of int, shape (n, k)
        Group id of each slot; -1 for padding.
    multipliers : ndarray, shape (n_groups,)
        Positive per-group multipliers (the alphas).
    weights : ndarray, shape (n, k)
        ``base_weights * multipliers[groups]``, the weights the solver uses.
    c_min : float
        Smallest active weight.
    """

    base_weights: np.ndarray
    exponents: np.ndarray
    groups: np.ndarray
    multipliers: np.ndarray
    weights: np.ndarray = field(init=False)
    c_min: float = field(init=False)

    def __post_init__(self):
        bw = _frozen(self.base_weights)
        ex = _frozen(self.exponents)
        gr = _frozen(self.groups, dtype=int)
        mu = _frozen(np.atleast_1d(self.multipliers))
        if bw.ndim != 2 or bw.shape != ex.shape or bw.shape != gr.shape:
            raise ValueError("base_weights, exponents and groups must share an (n, k) shape")
        if bw.shape[0] == 0 or bw.shape[1] == 0:
            raise ValueError("penalty must cover at least one index with one term")
        active = gr >= 0
        if not np.all(active.any(axis=1)):
            raise ValueError("every index needs at least one penalty term")
        if np.any(gr >= mu.size):
            raise ValueError("group id without a multiplier")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("multipliers must be positive and finite")
        if not np.all(np.isfinite(bw[active])) or np.any(bw[active] <= 0):
            raise ValueError("penalty weights must be positive and finite")
        if np.any((ex[active] < 1.0) | (ex[active] > 2.0)):
            raise ValueError("penalty exponents must lie in [1, 2]")
        bw = _frozen(np.where(active, bw, 0.0))
        ex = _frozen(np.where(active, ex, 1.0))
        w = _frozen(np.where(active, bw * mu[np.maximum(gr, 0)], 0.0))
        object.__setattr__(self, "base_weights", bw)
        object.__setattr__(self, "exponents", ex)
        object.__setattr__(self, "groups", gr)
        object.__setattr__(self, "multipliers", mu)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "c_min", float(w[active].min()))

    # -- constructors -----------------------------------------------------

    @classmethod
    def partitioned(cls, labels, weights, exponents, multipliers=None) -> "PenaltySpec":
        """One term per index; index ``j`` uses ``exponents[labels[j]]``.

        ``weights`` is a scalar or a per-index array.
        """
        labels = np.asarray(labels, dtype=int)
        exponents = np.atleast_1d(np.asarray(exponents, dtype=float))
        if labels.ndim != 1 or np.any(labels < 0) or np.any(labels >= exponents.size):
            raise ValueError("group labels must index into the exponent list")
        w = np.broadcast_to(np.asarray(weights, dtype=float), labels.shape)
        if multipliers is None:
            multipliers = np.ones(exponents.size)
        return cls(w[:, None], exponents[labels][:, None], labels[:, None], multipliers)

    @classmethod
    def uniform(cls, n: int, weight: float, exponent: float, multiplier: float = 1.0) -> "PenaltySpec":
        """Same single term on all ``n`` indices."""
        return cls.partitioned(np.zeros(n, dtype=int), weight, [exponent], [multiplier])

    @classmethod
    def stacked(cls, weights, exponents, multipliers=None, n: int | None = None) -> "PenaltySpec":
        """Every index carries all terms.

        ``weights`` has shape (n_terms, n), or (n_terms,) together with ``n``.
        """
        weights = np.asarray(weights, dtype=float)
        exponents = np.atleast_1d(np.asarray(exponents, dtype=float))
        if weights.ndim == 1 and n is not None:
            weights = np.repeat(weights[:, None], n, axis=1)
        if weights.ndim != 2 or weights.shape[0] != exponents.size:
            raise ValueError("stacked weights must have shape (n_terms, n)")
        n_terms, n = weights.shape
        if multipliers is None:
            multipliers = np.ones(n_terms)
        groups = np.broadcast_to(np.arange(n_terms), (n, n_terms))
        return cls(weights.T, np.broadcast_to(exponents, (n, n_terms)), groups, multipliers)

    @classmethod
    def from_terms(cls, term_lists: Sequence[Sequence[PenaltyTerm]]) -> "PenaltySpec":
        """Build from explicit per-index term lists; slot ``i`` is group ``i``."""
        term_lists = [[t if isinstance(t, PenaltyTerm) else PenaltyTerm(*t) for t in ts] for ts in term_lists]
        n = len(term_lists)
        k = max((len(ts) for ts in term_lists), default=0)
        bw = np.zeros((n, k))
        ex = np.ones((n, k))
        gr = -np.ones((n, k), dtype=int)
        for j, ts in enumerate(term_lists):
            for i, t in enumerate(ts):
                bw[j, i] = t.weight
                ex[j, i] = t.exponent
                gr[j, i] = i
        return cls(bw, ex, gr, np.ones(max(k, 1)))

    # -- derived views ----------------------------------------------------

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def n_groups(self) -> int:
        return self.multipliers.size

    @property
    def is_partitioned(self) -> bool:
        return self.weights.shape[1] == 1

    @property
    def has_strict_convexity(self) -> bool:
        """True when every index carries a term with exponent > 1."""
        return bool(np.all(np.any((self.exponents > 1.0) & (self.groups >= 0), axis=1)))

    @property
    def any_exponent_above_one(self) -> bool:
        return bool(np.any((self.exponents > 1.0) & (self.groups >= 0)))

    def terms_at(self, j: int) -> list[PenaltyTerm]:
        mask = self.groups[j] >= 0
        return [PenaltyTerm(w, p) for w, p in zip(self.weights[j][mask], self.exponents[j][mask])]

    def with_multipliers(self, multipliers) -> "PenaltySpec":
        return PenaltySpec(self.base_weights, self.exponents, self.groups, multipliers)

    def scaled(self, factor: float) -> "PenaltySpec":
        """Multiply every weight by ``factor`` (multipliers kept for reporting)."""
        return PenaltySpec(self.base_weights * factor, self.exponents, self.groups, self.multipliers)

    def shrink(self, h) -> np.ndarray:
        """Apply the per-index shrinkage map to ``h``."""
        h = np.asarray(h, dtype=float)
        if h.shape != (self.size,):
            raise ValueError(f"vector of length {h.shape} does not match penalty of size {self.size}")
        return shrink_array(h, self.weights, self.exponents)

    def value(self, f) -> float:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise ValueError(f"vector of length {f.shape} does not match penalty of size {self.size}")
        return float(np.sum(self.weights * np.abs(f)[:, None] ** self.exponents))

    @staticmethod
    def concat(*specs: "PenaltySpec") -> "PenaltySpec":
        """Stack penalties over concatenated index sets; group ids are offset."""
        k = max(s.weights.shape[1] for s in specs)
        bws, exs, grs, mus = [], [], [], []
        offset = 0
        for s in specs:
            pad = k - s.weights.shape[1]
            bws.append(np.pad(s.base_weights, ((0, 0), (0, pad))))
            exs.append(np.pad(s.exponents, ((0, 0), (0, pad)), constant_values=1.0))
            g = np.where(s.groups >= 0, s.groups + offset, -1)
            grs.append(np.pad(g, ((0, 0), (0, pad)), constant_values=-1))
            mus.append(s.multipliers)
            offset += s.n_groups
        return PenaltySpec(np.vstack(bws), np.vstack(exs), np.vstack(grs), np.concatenate(mus))


@dataclass(frozen=True, eq=False)
class Problem:
    """Minimize ``||K f - g||**2 + penalty(f)``."""

    operator: "LinearOp"  # noqa: F821
    data: np.ndarray
    penalty: PenaltySpec

    def __post_init__(self):
        g = _frozen(self.data)
        if g.shape != (self.operator.codomain_dim,):
            raise ValueError(
                f"data of shape {g.shape} does not match operator codomain {self.operator.codomain_dim}"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError("data must be finite")
        if self.penalty.size != self.operator.domain_dim:
            raise ValueError(
                f"penalty size {self.penalty.size} does not match operator domain {self.operator.domain_dim}"
            )
        object.__setattr__(self, "data", g)

    @property
    def dim(self) -> int:
        return self.operator.domain_dim

    def with_data(self, data) -> "Problem":
        return Problem(self.operator, data, self.penalty)

    def with_penalty(self, penalty: PenaltySpec) -> "Problem":
        return Problem(self.operator, self.data, penalty)


def _check(f, n):
    f = np.asarray(f, dtype=float)
    if f.shape != (n,):
        raise ValueError(f"expected a coefficient vector of length {n}, got shape {f.shape}")
    return f


def penalty_value(f, spec: PenaltySpec) -> float:
    """``sum_j sum_terms c*|f_j|**p``."""
    return spec.value(f)


def objective(f, prob: Problem) -> float:
    """``||K f - g||**2 + penalty(f)``."""
    f = _check(f, prob.dim)
    r = prob.operator.forward(f) - prob.data
    return float(r @ r) + prob.penalty.value(f)


def surrogate(f, a, prob: Problem) -> float:
    """Objective plus ``||f - a||**2 - ||K(f - a)||**2``."""
    f = _check(f, prob.dim)
    a = _check(a, prob.dim)
    d = f - a
    Kd = prob.operator.forward(d)
    return objective(f, prob) + float(d @ d) - float(Kd @ Kd)
