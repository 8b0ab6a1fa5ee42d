import numpy as np
import pytest

from mixthresh.model import PenaltySpec, Problem, objective, penalty_value, surrogate
from mixthresh.operators import diag_op, matrix_op

from conftest import random_problem


def l1_spec(n, w=1.0):
    return PenaltySpec.uniform(n, w, 1.0)


class TestPenaltySpec:
    def test_partitioned_layout(self):
        spec = PenaltySpec.partitioned([0, 1, 1], [1.0, 2.0, 3.0], [1.0, 1.5], [2.0, 0.5])
        assert spec.is_partitioned
        assert np.allclose(spec.weights[:, 0], [2.0, 1.0, 1.5])
        assert np.allclose(spec.exponents[:, 0], [1.0, 1.5, 1.5])
        assert spec.c_min == pytest.approx(1.0)

    def test_multipliers_folded_and_kept(self):
        spec = PenaltySpec.uniform(3, 2.0, 1.0, multiplier=0.25)
        assert np.allclose(spec.weights, 0.5)
        assert np.allclose(spec.base_weights, 2.0)
        assert spec.multipliers[0] == 0.25

    def test_stacked_layout(self):
        spec = PenaltySpec.stacked([1.0, 1.0], [1.0, 2.0], n=2)
        assert spec.weights.shape == (2, 2)
        assert not spec.is_partitioned
        assert spec.terms_at(1)[1].exponent == 2.0

    def test_rejects_invalid(self):
        with pytest.raises(ValueError):
            PenaltySpec.uniform(2, -1.0, 1.0)
        with pytest.raises(ValueError):
            PenaltySpec.uniform(2, 1.0, 2.5)
        with pytest.raises(ValueError):
            PenaltySpec.partitioned([0, 3], 1.0, [1.0])

    def test_immutable(self):
        spec = l1_spec(3)
        with pytest.raises(ValueError):
            spec.weights[0, 0] = 5.0

    def test_concat_offsets_groups(self):
        a = PenaltySpec.uniform(2, 1.0, 1.0)
        b = PenaltySpec.stacked([1.0, 1.0], [1.0, 2.0], n=2)
        c = PenaltySpec.concat(a, b)
        assert c.size == 4 and c.n_groups == 3
        assert c.groups[0].tolist() == [0, -1]
        assert c.groups[3].tolist() == [1, 2]

    def test_with_multipliers(self):
        spec = PenaltySpec.partitioned([0, 1], 1.0, [1.0, 2.0])
        s2 = spec.with_multipliers([0.1, 0.2])
        assert np.allclose(s2.weights[:, 0], [0.1, 0.2])

    def test_strict_convexity_flag(self):
        assert not l1_spec(2).has_strict_convexity
        assert PenaltySpec.stacked([1.0, 1.0], [1.0, 1.5], n=3).has_strict_convexity


class TestPenaltyValue:
    def test_zero(self):
        assert penalty_value(np.zeros(4), l1_spec(4)) == 0.0

    def test_l1(self):
        assert penalty_value([1.0, 2.0], l1_spec(2)) == pytest.approx(3.0)

    def test_stacked(self):
        spec = PenaltySpec.stacked([1.0, 1.0], [1.0, 2.0], n=2)
        assert penalty_value([1.0, 2.0], spec) == pytest.approx(8.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            penalty_value([1.0], l1_spec(2))

    def test_homogeneity_bounds(self, rng):
        for _ in range(100):
            prob = random_problem(rng)
            spec = prob.penalty
            f = rng.standard_normal(spec.size)
            t = rng.uniform(1.0, 5.0)
            pmin, pmax = spec.exponents[spec.groups >= 0].min(), spec.exponents[spec.groups >= 0].max()
            base = penalty_value(f, spec)
            val = penalty_value(t * f, spec)
            assert t ** pmin * base <= val * (1 + 1e-12)
            assert val <= t ** pmax * base * (1 + 1e-12)

    def test_strict_midpoint_convexity(self, rng):
        spec = PenaltySpec.partitioned([0, 1, 1], 1.0, [1.0, 1.5])
        for _ in range(200):
            f1, f2 = rng.standard_normal(3), rng.standard_normal(3)
            f2[1:] += 0.1  # differ at indices carrying p > 1
            mid = penalty_value(0.5 * (f1 + f2), spec)
            assert mid < 0.5 * (penalty_value(f1, spec) + penalty_value(f2, spec))


class TestObjective:
    def test_zero_iterate(self):
        prob = Problem(matrix_op([[0.3, 0.1], [0.0, 0.2]]), [1.0, -2.0], l1_spec(2))
        assert objective(np.zeros(2), prob) == pytest.approx(5.0)

    def test_scalar_minimizer_value(self):
        prob = Problem(diag_op([0.5]), [2.0], l1_spec(1))
        assert objective([2.0], prob) == pytest.approx(3.0)

    def test_dominates_penalty(self, rng):
        for _ in range(50):
            prob = random_problem(rng)
            f = rng.standard_normal(prob.dim)
            assert objective(f, prob) >= penalty_value(f, prob.penalty)

    def test_shape_mismatch(self):
        prob = Problem(diag_op([0.5, 0.5]), [1.0, 1.0], l1_spec(2))
        with pytest.raises(ValueError):
            objective([1.0], prob)

    def test_problem_checks_dimensions(self):
        with pytest.raises(ValueError):
            Problem(diag_op([0.5, 0.5]), [1.0], l1_spec(2))
        with pytest.raises(ValueError):
            Problem(diag_op([0.5, 0.5]), [1.0, 1.0], l1_spec(3))


class TestSurrogate:
    def test_equal_points(self, rng):
        prob = random_problem(rng)
        f = rng.standard_normal(prob.dim)
        assert surrogate(f, f, prob) == pytest.approx(objective(f, prob))

    def test_zero_operator(self):
        prob = Problem(matrix_op(np.zeros((2, 2))), [1.0, 1.0], l1_spec(2))
        f = np.array([0.5, -1.0])
        assert surrogate(f, np.zeros(2), prob) == pytest.approx(objective(f, prob) + f @ f)

    def test_gap_lower_bound(self, rng):
        for _ in range(100):
            prob = random_problem(rng)
            f, a = rng.standard_normal(prob.dim), rng.standard_normal(prob.dim)
            gap = surrogate(f, a, prob) - objective(f, prob)
            nb = prob.operator.norm_bound
            assert gap >= (1 - nb ** 2) * np.sum((f - a) ** 2) - 1e-12
            assert gap >= 0
