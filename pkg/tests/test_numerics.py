"""Random streams and elementwise ops."""
import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st

from growrbm.numerics import RngStream, sample_bernoulli, sigmoid


class TestSigmoid:
    def test_zero_is_half(self):
        assert sigmoid(0.0) == 0.5

    def test_one_matches_closed_form(self):
        npt.assert_allclose(sigmoid(1.0), 1.0 / (1.0 + math.exp(-1.0)),
                            rtol=0, atol=1e-15)

    def test_large_positive_close_to_one(self):
        assert sigmoid(50.0) > 1.0 - 1e-15

    def test_never_saturates_to_exact_bounds(self):
        lo = sigmoid(-1000.0)
        hi = sigmoid(1000.0)
        assert 0.0 < lo < 1.0
        assert 0.0 < hi < 1.0
        # logs must stay finite right at the clamp
        assert np.isfinite(np.log(lo))
        assert np.isfinite(np.log1p(-hi))

    def test_preserves_shape(self):
        out = sigmoid(np.zeros((3, 4)))
        assert out.shape == (3, 4)

    def test_rejects_non_finite(self):
        with pytest.raises(FloatingPointError):
            sigmoid(np.array([0.0, np.inf]))
        with pytest.raises(FloatingPointError):
            sigmoid(np.nan)

    @given(st.floats(min_value=-30.0, max_value=30.0))
    def test_symmetry(self, x):
        assert abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12

    @given(st.floats(min_value=-30.0, max_value=29.0),
           st.floats(min_value=0.01, max_value=1.0))
    def test_monotone(self, x, dx):
        assert sigmoid(x + dx) > sigmoid(x)


class TestRngStream:
    def test_same_seed_same_draws(self):
        a = RngStream(12345)
        b = RngStream(12345)
        npt.assert_array_equal(a.uniform(size=100), b.uniform(size=100))
        npt.assert_array_equal(a.normal(size=50), b.normal(size=50))
        npt.assert_array_equal(a.permutation(20), b.permutation(20))

    def test_different_seeds_differ(self):
        a = RngStream(1).uniform(size=100)
        b = RngStream(2).uniform(size=100)
        assert not np.array_equal(a, b)

    def test_split_is_pure(self):
        root = RngStream(7)
        first = root.split(3).uniform(size=10)
        root.uniform(size=1000)  # consuming draws must not move children
        second = root.split(3).uniform(size=10)
        npt.assert_array_equal(first, second)

    def test_split_children_distinct(self):
        root = RngStream(7)
        keys = {root.split(i).key for i in range(1000)}
        assert len(keys) == 1000
        a = root.split(0).uniform(size=50)
        b = root.split(1).uniform(size=50)
        assert not np.array_equal(a, b)

    def test_split_rejects_negative(self):
        with pytest.raises(ValueError):
            RngStream(0).split(-1)

    def test_child_differs_from_parent(self):
        root = RngStream(42)
        child = root.split(0)
        assert not np.array_equal(RngStream(42).uniform(size=50),
                                  child.uniform(size=50))


class TestSampleBernoulli:
    def test_extremes_are_exact(self):
        rng = RngStream(0)
        npt.assert_array_equal(sample_bernoulli(np.zeros(1000), rng),
                               np.zeros(1000))
        npt.assert_array_equal(sample_bernoulli(np.ones(1000), rng),
                               np.ones(1000))

    def test_values_are_binary_floats(self):
        rng = RngStream(1)
        out = sample_bernoulli(np.full(500, 0.3), rng)
        assert out.dtype == np.float64
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_mean_matches_probability(self):
        rng = RngStream(2)
        out = sample_bernoulli(np.full(20000, 0.5), rng)
        assert abs(out.mean() - 0.5) < 0.02

    def test_empty_input(self):
        rng = RngStream(3)
        out = sample_bernoulli(np.zeros((0, 4)), rng)
        assert out.shape == (0, 4)

    def test_deterministic_given_seed(self):
        p = np.linspace(0.1, 0.9, 64).reshape(8, 8)
        a = sample_bernoulli(p, RngStream(9))
        b = sample_bernoulli(p, RngStream(9))
        npt.assert_array_equal(a, b)

    def test_rejects_out_of_range(self):
        rng = RngStream(4)
        with pytest.raises(ValueError):
            sample_bernoulli(np.array([0.5, 1.5]), rng)
        with pytest.raises(ValueError):
            sample_bernoulli(np.array([-0.1]), rng)
