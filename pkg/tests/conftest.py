import numpy as np
import pytest

from mixthresh.model import PenaltySpec, Problem
from mixthresh.operators import matrix_op


def random_matrix_op(rng, m, n, norm=0.9):
    """Gaussian matrix rescaled to spectral norm ``norm`` (exact, via SVD)."""
    A = rng.standard_normal((m, n))
    A *= norm / np.linalg.norm(A, 2)
    return matrix_op(A)


def random_terms(rng, kind):
    """Random term list of a given flavour as (weight, exponent) pairs."""
    if kind == "l1":
        return [(rng.uniform(0.1, 3.0), 1.0)]
    if kind == "lp":
        return [(rng.uniform(0.1, 3.0), rng.uniform(1.0, 2.0))]
    if kind == "l2":
        return [(rng.uniform(0.1, 3.0), 2.0)]
    if kind == "mixed_with_l1":
        k = rng.integers(1, 4)
        return [(rng.uniform(0.1, 2.0), 1.0)] + [
            (rng.uniform(0.1, 2.0), rng.choice([rng.uniform(1.0, 2.0), 2.0])) for _ in range(k)
        ]
    if kind == "mixed_no_l1":
        k = rng.integers(2, 4)
        return [(rng.uniform(0.1, 2.0), rng.choice([rng.uniform(1.01, 2.0), 2.0])) for _ in range(k)]
    raise ValueError(kind)


TERM_KINDS = ("l1", "lp", "l2", "mixed_with_l1", "mixed_no_l1")


def random_penalty(rng, n, stacked=False):
    if stacked:
        k = int(rng.integers(2, 4))
        exps = [1.0] + list(rng.uniform(1.0, 2.0, size=k - 1))
        return PenaltySpec.stacked(rng.uniform(0.05, 1.0, size=(k, n)), exps)
    k = int(rng.integers(1, 4))
    labels = rng.integers(0, k, size=n)
    exps = rng.choice([1.0, 1.3, 1.5, 2.0], size=k)
    return PenaltySpec.partitioned(labels, rng.uniform(0.05, 1.0, size=n), exps)


def random_problem(rng, n=None, m=None, stacked=False, norm=0.9):
    n = n or int(rng.integers(1, 17))
    m = m or int(rng.integers(1, 17))
    K = random_matrix_op(rng, m, n, norm)
    g = rng.standard_normal(m)
    return Problem(K, g, random_penalty(rng, n, stacked))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def checked_solve(f0, prob, stop=None, callback=None):
    """Run the solver and assert the trace invariants every solve must satisfy."""
    from mixthresh.solver import MONOTONE_SLACK, solve

    f, trace = solve(f0, prob, stop, callback)
    assert trace.is_monotone(MONOTONE_SLACK), trace.monotone_violation()
    return f, trace
