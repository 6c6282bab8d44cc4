import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epuc import (
    ClassPartition,
    MetricError,
    ValidationError,
    c_sum_top_k,
    c_sum_weighted,
    c_third_order,
    c_vector,
    cbec,
    compute_moments,
    entropy,
    mutual_information_exact,
    ova_binary_mi,
    policy_scores,
    report,
    report_all,
    skewness_rho,
)
from epuc.core import POLICY_NAMES

from conftest import binary_summary, one_input
from test_moments import simplex_rows

PART = ClassPartition(safe=frozenset({0}), critical=frozenset({1}))


class TestEntropy:
    def test_point_mass(self):
        assert entropy([1.0, 0.0, 0.0, 0.0]) == 0.0

    def test_uniform_four(self):
        assert entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-12)

    def test_binary(self):
        assert entropy([0.3, 0.7]) == pytest.approx(0.610864, abs=1e-6)


class TestExactMI:
    def test_identical_rows_zero(self):
        assert mutual_information_exact([[0.3, 0.7]] * 4) == 0.0

    def test_opposite_vertices(self):
        got = mutual_information_exact([[1.0, 0.0], [0.0, 1.0]])
        assert got == pytest.approx(math.log(2), abs=1e-12)

    def test_worked_example(self):
        got = mutual_information_exact([[0.2, 0.8], [0.4, 0.6]])
        assert got == pytest.approx(0.024157, abs=1e-6)

    def test_corrupted_input_raises(self):
        summary_rows = np.array([[0.5, 0.5], [0.5, 0.5]])
        # Bypass through the private clamp: feed values that cannot arise
        # from a valid tensor to check the guard trips.
        from epuc.metrics import _clamp_nonnegative

        assert _clamp_nonnegative(-1e-10, "mi") == 0.0
        with pytest.raises(MetricError):
            _clamp_nonnegative(-1e-8, "mi")
        assert mutual_information_exact(summary_rows) == 0.0


class TestCVector:
    def test_paper_counterexample_pair(self):
        c = c_vector(binary_summary(0.3, 0.01))
        np.testing.assert_allclose(c, [0.0166667, 0.0071429], atol=1e-6)
        assert c.sum() == pytest.approx(0.0238095, abs=1e-7)

    def test_shifted_mean(self):
        c = c_vector(binary_summary(0.45, 0.01))
        assert c.sum() == pytest.approx(0.0202020, abs=1e-7)

    def test_zero_variance_gives_zero(self):
        c = c_vector(binary_summary(0.3, 0.0))
        assert np.all(c == 0.0)


class TestThirdOrderAndRho:
    def test_symmetric_equals_c_vector(self):
        s = binary_summary(0.3, 0.01, m3_0=0.0)
        np.testing.assert_array_equal(c_third_order(s), c_vector(s))

    def test_two_point_zero_one_mixture(self):
        # p0 in {0,1} with weights (0.9, 0.1): mu=0.1, var=0.09, m3=0.072.
        s = binary_summary(0.1, 0.09, m3_0=0.072)
        assert c_third_order(s)[0] == pytest.approx(-0.75, abs=1e-7)
        assert skewness_rho(s)[0] == pytest.approx(2.66667, abs=1e-5)

    def test_zero_variance_gives_zero(self):
        s = binary_summary(0.4, 0.0)
        assert np.all(c_third_order(s) == 0.0)
        assert np.all(skewness_rho(s) == 0.0)

    def test_ratio_identity_against_components(self, rng):
        # rho_k * (second-order term) == |third-order correction| whenever
        # the class has positive variance and non-trivial mean. The
        # correction is evaluated directly (m3 / (6 mu^2) with the library's
        # eps convention); deriving it as c3 - c would reintroduce
        # subtraction cancellation.
        from epuc.core import EPS

        for _ in range(200):
            raw = rng.dirichlet(rng.uniform(0.2, 4.0, size=4), size=12)
            summ = compute_moments(one_input(raw), 0)
            c = c_vector(summ)
            rho = skewness_rho(summ)
            corr = np.abs(summ.third_moment) / (6.0 * (summ.mean + EPS) ** 2)
            active = (summ.variance > 0) & (summ.mean > 1e-6)
            lhs = rho[active] * c[active]
            rhs = corr[active]
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-300)
            # The stored diagnostic is consistent with that correction up to
            # the cancellation floor of the subtraction.
            c3 = c_third_order(summ)
            np.testing.assert_allclose(
                (c - c3)[active], (summ.third_moment / (6.0 * (summ.mean + EPS) ** 2))[active],
                rtol=1e-9, atol=1e-16,
            )


class TestCbec:
    def test_nonnegative_correlation_gate_closed(self):
        # Classes 0 and 1 move together against class 2, so their pairwise
        # correlation is +1 and the safe-critical gate stays closed.
        t = one_input([[0.1, 0.1, 0.8], [0.2, 0.2, 0.6], [0.3, 0.3, 0.4]])
        s = compute_moments(t, 0)
        assert s.correlation[0, 1] == pytest.approx(1.0, abs=1e-12)
        part = ClassPartition(safe=frozenset({0}), critical=frozenset({1}))
        assert cbec(s, part, c_vector(s)) == 0.0

    def test_single_pair_worked_example(self):
        s = binary_summary(0.3, 0.01)
        got = cbec(s, PART, np.array([0.02, 0.03]))
        assert got == pytest.approx(0.0244949, abs=1e-7)

    def test_zero_c_kills_pair(self):
        s = binary_summary(0.3, 0.01)
        assert cbec(s, PART, np.array([0.0, 0.03])) == 0.0

    def test_sqrt_dampening(self, rng):
        # Scaling one class's C by a multiplies its cross terms by sqrt(a).
        raw = rng.dirichlet(np.ones(4), size=10)
        summ = compute_moments(one_input(raw), 0)
        part = ClassPartition(safe=frozenset({0, 1}), critical=frozenset({2, 3}))
        c = c_vector(summ)
        base = cbec(summ, part, c)
        if base == 0.0:
            return
        for a in (0.25, 4.0, 9.0):
            scaled = c.copy()
            scaled[2] *= a
            got = cbec(summ, part, scaled)
            # Cross terms of class 2 scale by sqrt(a); class-3 terms do not.
            part2 = ClassPartition(safe=frozenset({0, 1}), critical=frozenset({2}))
            only2 = cbec(summ, part2, c)
            part3 = ClassPartition(safe=frozenset({0, 1}), critical=frozenset({3}))
            only3 = cbec(summ, part3, c)
            assert got == pytest.approx(math.sqrt(a) * only2 + only3, rel=1e-10)


class TestOvaBinaryMI:
    def test_identical_rows(self):
        assert ova_binary_mi([[0.3, 0.7]] * 3, PART) == 0.0

    def test_vertices_give_ln2(self):
        got = ova_binary_mi([[1.0, 0.0], [0.0, 1.0]], PART)
        assert got == pytest.approx(math.log(2), abs=1e-12)

    def test_empty_critical_is_zero(self):
        part = ClassPartition(safe=frozenset({0, 1}), critical=frozenset())
        assert ova_binary_mi([[0.2, 0.8], [0.4, 0.6]], part) == 0.0

    def test_matches_exact_mi_for_binary(self):
        rows = [[0.2, 0.8], [0.4, 0.6]]
        got = ova_binary_mi(rows, PART)
        assert got == pytest.approx(mutual_information_exact(rows), rel=1e-12)


class TestPolicyScores:
    def test_dirac_scores(self):
        t = one_input([[0.1, 0.9]] * 3)
        summ = compute_moments(t, 0)
        scores = {
            s.policy_name: s.value
            for s in policy_scores(t.values[0], summ, c_vector(summ), PART)
        }
        assert scores["MaxProb"] == pytest.approx(1 - 0.9, rel=1e-12)
        for name in POLICY_NAMES:
            if name not in ("MaxProb", "Entropy"):
                assert scores[name] == 0.0, name

    def test_critical_aggregations_from_c_example(self):
        s = binary_summary(0.3, 0.01)
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        scores = {
            p.policy_name: p.value
            for p in policy_scores(t.values[0], s, c_vector(s), PART)
        }
        assert scores["CCritMax"] == pytest.approx(0.0071429, abs=1e-7)
        assert scores["CCritSum"] == pytest.approx(0.0071429, abs=1e-7)
        assert scores["SaleEUCrit"] == pytest.approx(0.01, rel=1e-12)

    def test_global_variance_is_trace(self, rng):
        raw = rng.dirichlet(np.ones(4), size=8)
        summ = compute_moments(one_input(raw), 0)
        part = ClassPartition(safe=frozenset({0, 1}), critical=frozenset({2, 3}))
        scores = {
            p.policy_name: p.value
            for p in policy_scores(raw, summ, c_vector(summ), part)
        }
        assert scores["SaleEUGlobal"] == pytest.approx(
            np.trace(summ.covariance), abs=1e-12
        )

    def test_partition_required(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        summ = compute_moments(t, 0)
        with pytest.raises(ValidationError):
            policy_scores(t.values[0], summ, c_vector(summ), None)
        empty = ClassPartition(safe=frozenset({0, 1}), critical=frozenset())
        with pytest.raises(ValidationError):
            policy_scores(t.values[0], summ, c_vector(summ), empty)

    def test_policy_set_matches_table(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        summ = compute_moments(t, 0)
        names = [p.policy_name for p in policy_scores(t.values[0], summ, c_vector(summ), PART)]
        assert tuple(names) == POLICY_NAMES


class TestReport:
    def test_fields_match_components(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6], [0.3, 0.7]])
        rep = report(t, 0, PART)
        summ = compute_moments(t, 0)
        np.testing.assert_array_equal(rep.c_vector, c_vector(summ))
        np.testing.assert_array_equal(rep.rho, skewness_rho(summ))
        np.testing.assert_array_equal(rep.c_third_order, c_third_order(summ))
        assert rep.mutual_information == mutual_information_exact(t.values[0])
        assert rep.c_sum == pytest.approx(rep.c_vector.sum(), abs=1e-12)
        assert set(rep.policy_scores) == set(POLICY_NAMES)

    def test_decomposition_consistency(self):
        t = one_input([[0.2, 0.8], [0.4, 0.6]])
        rep = report(t, 0, PART)
        assert rep.entropy_of_mean - rep.expected_entropy == pytest.approx(
            rep.mutual_information, abs=1e-12
        )

    def test_report_all_matches_serial_and_parallel(self, rng):
        raw = rng.dirichlet(np.ones(3), size=(6, 5))
        from epuc import validate_tensor

        t = validate_tensor(raw)
        part = ClassPartition(safe=frozenset({0}), critical=frozenset({1, 2}))
        serial = report_all(t, part, threads=1)
        parallel = report_all(t, part, threads=4)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.c_vector, b.c_vector)
            assert a.policy_scores == b.policy_scores


class TestCsumAggregations:
    def test_top_k(self):
        c = np.array([0.1, 0.4, 0.2, 0.3])
        mean = np.array([0.5, 0.1, 0.3, 0.1])
        assert c_sum_top_k(c, mean, 2) == pytest.approx(0.3)
        assert c_sum_top_k(c, mean, 10) == pytest.approx(c.sum())
        with pytest.raises(ValidationError):
            c_sum_top_k(c, mean, 0)

    def test_weighted(self):
        c = np.array([0.1, 0.4])
        mean = np.array([0.25, 0.75])
        assert c_sum_weighted(c, mean) == pytest.approx(0.325)


@settings(max_examples=150, deadline=None)
@given(simplex_rows())
def test_mi_nonnegative_and_zero_iff_identical(rows):
    mi = mutual_information_exact(rows)
    assert mi >= 0.0
    if np.all(rows == rows[0]):
        assert mi <= 1e-9
    elif mi == 0.0:
        # Zero MI must mean the rows were identical.
        assert np.all(rows == rows[0])


@settings(max_examples=150, deadline=None)
@given(simplex_rows())
def test_c_vector_nonnegative_and_boundary_bound(rows):
    t = one_input(rows)
    summ = compute_moments(t, 0, bessel=False)
    c = c_vector(summ)
    assert np.all(c >= 0.0)
    assert np.all(c <= 0.5 * (1.0 - summ.mean) + 1e-9)
    # Bessel correction scales the bound by S / (S - 1).
    s = rows.shape[0]
    summ_b = compute_moments(t, 0)
    c_b = c_vector(summ_b)
    assert np.all(c_b <= 0.5 * (1.0 - summ_b.mean) * s / (s - 1.0) + 1e-9)
