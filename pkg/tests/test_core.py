import numpy as np
import pytest

from epuc import (
    ClassPartition,
    DimensionError,
    MomentSummary,
    SimplexViolationError,
    UncertaintyReport,
    ValidationError,
    make_label_set,
    validate_tensor,
)


class TestValidateTensor:
    def test_valid_minimal(self):
        t = validate_tensor([[[0.2, 0.8], [0.4, 0.6]]])
        assert (t.n_inputs, t.n_samples, t.n_classes) == (1, 2, 2)
        assert t.values.dtype == np.float64

    def test_row_off_simplex_rejected(self):
        with pytest.raises(SimplexViolationError) as exc:
            validate_tensor([[[0.5, 0.6], [0.4, 0.6]]])
        assert exc.value.input_index == 0
        assert exc.value.pass_index == 0
        assert exc.value.row_sum == pytest.approx(1.1)

    def test_single_pass_rejected(self):
        with pytest.raises(DimensionError):
            validate_tensor([[[0.5, 0.5]]])

    def test_single_class_rejected(self):
        with pytest.raises(DimensionError):
            validate_tensor([[[1.0], [1.0]]])

    def test_rank_checked(self):
        with pytest.raises(DimensionError):
            validate_tensor([[0.5, 0.5]])

    def test_negative_probability_rejected(self):
        with pytest.raises(SimplexViolationError):
            validate_tensor([[[1.2, -0.2], [0.5, 0.5]]])

    def test_within_tolerance_accepted_not_renormalised(self):
        row = [0.5, 0.5 + 5e-7]
        t = validate_tensor([[row, [0.5, 0.5]]])
        assert t.values[0, 0, 1] == row[1]

    def test_values_immutable(self):
        t = validate_tensor([[[0.2, 0.8], [0.4, 0.6]]])
        with pytest.raises(ValueError):
            t.values[0, 0, 0] = 0.5

    def test_input_ids_length_checked(self):
        with pytest.raises(DimensionError):
            validate_tensor([[[0.2, 0.8], [0.4, 0.6]]], input_ids=("a", "b"))


class TestLabelSet:
    def test_predicted_is_argmax(self):
        labels = make_label_set([1, 0], [[0.2, 0.8], [0.7, 0.3]])
        assert labels.predicted_labels.tolist() == [1, 0]

    def test_argmax_tie_takes_lowest_index(self):
        labels = make_label_set([0], [[0.4, 0.4, 0.2]])
        assert labels.predicted_labels.tolist() == [0]
        labels = make_label_set([0], [[0.2, 0.4, 0.4]])
        assert labels.predicted_labels.tolist() == [1]

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            make_label_set([2], [[0.6, 0.4]])


class TestClassPartition:
    def test_disjoint_required(self):
        with pytest.raises(ValidationError):
            ClassPartition(safe=frozenset({0, 1}), critical=frozenset({1}))

    def test_union_may_be_strict_subset(self):
        part = ClassPartition(safe=frozenset({0}), critical=frozenset({3}))
        part.check_classes(5)

    def test_check_classes_bounds(self):
        part = ClassPartition(safe=frozenset({0}), critical=frozenset({3}))
        with pytest.raises(ValidationError):
            part.check_classes(3)


class TestMomentSummaryInvariants:
    def _args(self):
        return dict(
            mean=np.array([0.3, 0.7]),
            variance=np.array([0.01, 0.01]),
            covariance=np.array([[0.01, -0.01], [-0.01, 0.01]]),
            correlation=np.array([[1.0, -1.0], [-1.0, 1.0]]),
            third_moment=np.zeros(2),
            n_samples=2,
            bessel=False,
        )

    def test_valid(self):
        MomentSummary(**self._args())

    def test_mean_off_simplex_rejected(self):
        args = self._args()
        args["mean"] = np.array([0.3, 0.8])
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_variance_must_match_diagonal(self):
        args = self._args()
        args["variance"] = np.array([0.01, 0.0100001])
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_cov_rows_must_sum_to_zero(self):
        args = self._args()
        args["covariance"] = np.array([[0.01, 0.0], [0.0, 0.01]])
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_variance_bound_enforced(self):
        args = self._args()
        # 0.25 > 0.3 * 0.7 = 0.21 with population normalisation.
        args["variance"] = np.array([0.25, 0.25])
        args["covariance"] = np.array([[0.25, -0.25], [-0.25, 0.25]])
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_bessel_relaxes_bound_by_s_over_s_minus_1(self):
        # 0/1 samples at S=2: population variance 0.25, Bessel variance 0.5.
        args = self._args()
        args["mean"] = np.array([0.5, 0.5])
        args["variance"] = np.array([0.5, 0.5])
        args["covariance"] = np.array([[0.5, -0.5], [-0.5, 0.5]])
        args["bessel"] = True
        MomentSummary(**args)
        args["bessel"] = False
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_correlation_range_enforced(self):
        args = self._args()
        args["correlation"] = np.array([[1.0, -1.5], [-1.5, 1.0]])
        with pytest.raises(ValidationError):
            MomentSummary(**args)

    def test_correlation_diagonal_must_flag_variance(self):
        args = self._args()
        args["correlation"] = np.array([[0.0, -1.0], [-1.0, 1.0]])
        with pytest.raises(ValidationError):
            MomentSummary(**args)


class TestUncertaintyReport:
    def _args(self):
        return dict(
            entropy_of_mean=0.6,
            expected_entropy=0.5,
            mutual_information=0.1,
            c_vector=np.array([0.05, 0.05]),
            c_sum=0.1,
            c_third_order=np.array([0.04, 0.04]),
            rho=np.array([0.1, 0.1]),
            policy_scores={"MI": 0.1},
        )

    def test_valid(self):
        UncertaintyReport(**self._args())

    def test_negative_c_rejected(self):
        args = self._args()
        args["c_vector"] = np.array([-0.01, 0.11])
        with pytest.raises(ValidationError):
            UncertaintyReport(**args)

    def test_negative_rho_rejected(self):
        args = self._args()
        args["rho"] = np.array([-0.1, 0.1])
        with pytest.raises(ValidationError):
            UncertaintyReport(**args)

    def test_large_negative_mi_rejected(self):
        args = self._args()
        args["mutual_information"] = -1e-6
        with pytest.raises(ValidationError):
            UncertaintyReport(**args)

    def test_non_finite_rejected(self):
        args = self._args()
        args["entropy_of_mean"] = float("nan")
        with pytest.raises(ValidationError):
            UncertaintyReport(**args)
