import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epuc import compute_all_moments, compute_moments, validate_tensor

from conftest import one_input


def simplex_rows(s=st.integers(2, 8), k=st.integers(2, 5)):
    """Strategy: one input of S rows on the K-simplex (integer grid)."""

    @st.composite
    def build(draw):
        n_s = draw(s)
        n_k = draw(k)
        rows = []
        for _ in range(n_s):
            cells = draw(
                st.lists(st.integers(0, 64), min_size=n_k, max_size=n_k).filter(
                    lambda c: sum(c) > 0
                )
            )
            total = sum(cells)
            rows.append([c / total for c in cells])
        return np.asarray(rows)

    return build()


class TestHandExamples:
    def test_two_pass_binary(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        m = compute_moments(t, 0)
        np.testing.assert_allclose(m.mean, [0.3, 0.7], atol=1e-15)
        np.testing.assert_allclose(m.variance, [0.02, 0.02], atol=1e-15)
        assert m.covariance[0, 1] == pytest.approx(-0.02, abs=1e-15)
        assert m.correlation[0, 1] == pytest.approx(-1.0, abs=1e-12)
        np.testing.assert_allclose(m.third_moment, [0.0, 0.0], atol=1e-12)

    def test_identical_rows_degenerate(self):
        t = one_input([[0.1, 0.6, 0.3]] * 5)
        m = compute_moments(t, 0)
        assert np.all(m.variance == 0.0)
        assert np.all(m.correlation == 0.0)
        assert np.all(m.third_moment == 0.0)

    def test_binary_varying_correlation_is_minus_one(self):
        t = one_input([[0.1, 0.9], [0.5, 0.5], [0.35, 0.65]])
        m = compute_moments(t, 0)
        assert m.correlation[0, 1] == pytest.approx(-1.0, abs=1e-12)
        assert m.correlation[0, 0] == 1.0

    def test_population_flag(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        m = compute_moments(t, 0, bessel=False)
        np.testing.assert_allclose(m.variance, [0.01, 0.01], atol=1e-15)
        assert m.bessel is False

    def test_third_moment_uses_1_over_s(self):
        # Three passes: deviations for class 0 are (-0.1, -0.1, +0.2).
        t = one_input([[0.2, 0.8], [0.2, 0.8], [0.5, 0.5]])
        m = compute_moments(t, 0)
        expect = ((-0.1) ** 3 + (-0.1) ** 3 + 0.2**3) / 3.0
        assert m.third_moment[0] == pytest.approx(expect, rel=1e-12)


class TestTightnessClosedForms:
    """0/1-valued samples attain the variance bound exactly."""

    def _zero_one_tensor(self, s_ones, s_zeros):
        rows = [[1.0, 0.0]] * s_ones + [[0.0, 1.0]] * s_zeros
        return one_input(rows)

    @pytest.mark.parametrize("s_ones,s_zeros", [(1, 1), (3, 7), (5, 5), (9, 2)])
    def test_population_equality(self, s_ones, s_zeros):
        t = self._zero_one_tensor(s_ones, s_zeros)
        m = compute_moments(t, 0, bessel=False)
        mu = s_ones / (s_ones + s_zeros)
        assert m.variance[0] == pytest.approx(mu * (1 - mu), rel=1e-12)

    @pytest.mark.parametrize("s_ones,s_zeros", [(1, 1), (3, 7), (5, 5), (9, 2)])
    def test_bessel_closed_form(self, s_ones, s_zeros):
        t = self._zero_one_tensor(s_ones, s_zeros)
        m = compute_moments(t, 0)
        s = s_ones + s_zeros
        mu = s_ones / s
        assert m.variance[0] == pytest.approx(s / (s - 1) * mu * (1 - mu), rel=1e-12)


class TestBatch:
    def test_empty_tensor_gives_empty_list(self):
        t = validate_tensor(np.empty((0, 2, 2)))
        assert compute_all_moments(t) == []

    def test_order_preserved(self, rng):
        raw = rng.dirichlet(np.ones(3), size=(4, 6))
        t = validate_tensor(raw)
        batch = compute_all_moments(t)
        assert len(batch) == 4
        for i, m in enumerate(batch):
            np.testing.assert_array_equal(m.mean, compute_moments(t, i).mean)


@settings(max_examples=150, deadline=None)
@given(simplex_rows())
def test_variance_bound_property(rows):
    t = one_input(rows)
    s = rows.shape[0]
    for bessel, factor in ((False, 1.0), (True, s / (s - 1.0))):
        m = compute_moments(t, 0, bessel=bessel)
        bound = factor * m.mean * (1.0 - m.mean) + 1e-12
        assert np.all(m.variance <= bound)


@settings(max_examples=150, deadline=None)
@given(simplex_rows())
def test_cov_rows_sum_to_zero_property(rows):
    m = compute_moments(one_input(rows), 0)
    assert np.abs(m.covariance.sum(axis=1)).max() <= 1e-9


@settings(max_examples=100, deadline=None)
@given(simplex_rows(s=st.integers(2, 6), k=st.integers(2, 4)))
def test_symmetric_samples_zero_third_moment(rows):
    # Mirror every row set around its mean by including each deviation twice
    # with opposite signs: append the reflected rows when they stay valid.
    mean = rows.mean(axis=0)
    reflected = 2 * mean - rows
    if (reflected < 0).any() or (reflected > 1).any():
        return
    m = compute_moments(one_input(np.concatenate([rows, reflected])), 0)
    assert np.abs(m.third_moment).max() <= 1e-12
