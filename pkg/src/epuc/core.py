"""Shared domain types, validated at construction.

Everything downstream consumes these types. Construction either satisfies
every documented invariant or raises; nothing is silently repaired. All
arrays are stored as read-only float64 regardless of the input precision,
because the 1/mu and 1/mu^2 factors used later amplify rounding near the
simplex boundary.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_ATOL = 1e-6
COV_ROWSUM_ATOL = 1e-9
VAR_BOUND_ATOL = 1e-12
MI_CLAMP_ATOL = 1e-9
EPS = 1e-10

POLICY_NAMES = (
    "Entropy",
    "MI",
    "MaxProb",
    "SaleEUGlobal",
    "VarCrit",
    "SaleEUCrit",
    "OvAMI",
    "CCritSum",
    "CCritMax",
    "CBEC",
)


class EpucError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EpucError):
    """Array rank or axis length outside the accepted range."""


class SimplexViolationError(EpucError):
    """A probability row is off the simplex beyond tolerance."""

    def __init__(self, input_index, pass_index, row_sum, detail=""):
        self.input_index = int(input_index)
        self.pass_index = int(pass_index)
        self.row_sum = float(row_sum)
        msg = (
            f"input {self.input_index}, pass {self.pass_index}: "
            f"row sum {self.row_sum!r} off the simplex"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ValidationError(EpucError):
    """A domain-type invariant failed at construction."""


class MetricError(EpucError):
    """A metric evaluated to an impossible value, indicating corrupted input."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SampleTensor:
    """N inputs x S stochastic passes x K class probabilities.

    The sole ingestion format: row ``values[i, s]`` is the probability
    vector produced by pass ``s`` for input ``i``.
    """

    values: np.ndarray
    input_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise DimensionError(f"expected a rank-3 array, got rank {v.ndim}")
        n, s, k = v.shape
        if s < 2:
            raise DimensionError(f"need S >= 2 passes for Bessel correction, got S={s}")
        if k < 2:
            raise DimensionError(f"need K >= 2 classes, got K={k}")
        v = _readonly(v)
        if v.size:
            if not np.all(np.isfinite(v)):
                i, s_, _ = np.unravel_index(int(np.argmin(np.isfinite(v))), v.shape)
                raise SimplexViolationError(i, s_, np.nan, "non-finite probability")
            bad = (v < 0.0) | (v > 1.0)
            if bad.any():
                i, s_, _ = np.unravel_index(int(np.argmax(bad)), v.shape)
                raise SimplexViolationError(
                    i, s_, v[i, s_].sum(), "probability outside [0, 1]"
                )
            sums = v.sum(axis=2)
            off = np.abs(sums - 1.0) > SIMPLEX_ATOL
            if off.any():
                i, s_ = np.unravel_index(int(np.argmax(off)), sums.shape)
                raise SimplexViolationError(i, s_, sums[i, s_])
        if self.input_ids is not None:
            ids = tuple(str(x) for x in self.input_ids)
            if len(ids) != n:
                raise DimensionError(
                    f"{len(ids)} input ids for {n} inputs"
                )
            object.__setattr__(self, "input_ids", ids)
        object.__setattr__(self, "values", v)

    @property
    def n_inputs(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return self.values.shape[2]


def validate_tensor(raw, input_ids=None) -> SampleTensor:
    """Validate a raw N x S x K probability array.

    Rows off the simplex beyond ``SIMPLEX_ATOL`` are rejected, never
    renormalised.
    """
    return SampleTensor(np.asarray(raw, dtype=np.float64), input_ids)


@dataclass(frozen=True, eq=False)
class LabelSet:
    """True labels plus predicted labels derived from the mean prediction.

    Predicted labels are always recomputed as argmax of the per-input mean
    probability vector (ties broken toward the lowest class index); they are
    never ingested from outside.
    """

    true_labels: np.ndarray
    predicted_labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        y = np.asarray(self.true_labels, dtype=np.int64)
        yhat = np.asarray(self.predicted_labels, dtype=np.int64)
        if y.ndim != 1 or yhat.ndim != 1 or y.shape != yhat.shape:
            raise DimensionError("true and predicted labels must be equal-length 1-d")
        k = int(self.n_classes)
        for name, arr in (("true", y), ("predicted", yhat)):
            if arr.size and (arr.min() < 0 or arr.max() >= k):
                raise ValidationError(f"{name} label outside [0, {k})")
        y.setflags(write=False)
        yhat.setflags(write=False)
        object.__setattr__(self, "true_labels", y)
        object.__setattr__(self, "predicted_labels", yhat)
        object.__setattr__(self, "n_classes", k)

    def __len__(self) -> int:
        return self.true_labels.shape[0]


def make_label_set(true_labels, mean_predictions) -> LabelSet:
    """Build a LabelSet from true labels and per-input mean probability vectors."""
    means = np.asarray(mean_predictions, dtype=np.float64)
    if means.ndim != 2:
        raise DimensionError("mean predictions must be N x K")
    y = np.asarray(true_labels, dtype=np.int64)
    if y.shape[0] != means.shape[0]:
        raise DimensionError(
            f"{y.shape[0]} labels for {means.shape[0]} mean predictions"
        )
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    predicted = np.argmax(means, axis=1)
    return LabelSet(y, predicted, means.shape[1])


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint safe and critical class-index sets.

    The union may be a strict subset of the label space. Operations that
    target critical classes check for a nonempty critical set themselves.
    """

    safe: frozenset[int]
    critical: frozenset[int]

    def __post_init__(self):
        safe = frozenset(int(i) for i in self.safe)
        critical = frozenset(int(i) for i in self.critical)
        if any(i < 0 for i in safe | critical):
            raise ValidationError("class indices must be nonnegative")
        if safe & critical:
            raise ValidationError(f"safe and critical overlap: {sorted(safe & critical)}")
        object.__setattr__(self, "safe", safe)
        object.__setattr__(self, "critical", critical)

    def check_classes(self, n_classes: int) -> None:
        out = [i for i in self.safe | self.critical if i >= n_classes]
        if out:
            raise ValidationError(
                f"partition indices {sorted(out)} outside [0, {n_classes})"
            )

    @property
    def safe_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.safe))

    @property
    def critical_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.critical))


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Per-input moment estimates from the S stochastic passes.

    ``variance``/``covariance`` carry Bessel correction 1/(S-1) by default
    (``bessel=False`` selects the population 1/S normalisation, used only for
    oracle cross-checks). ``third_moment`` is always normalised by 1/S.
    Correlation entries are defined as 0 whenever either standard deviation
    vanishes, so downstream correlation gates contribute nothing for certain
    classes.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray
    third_moment: np.ndarray
    n_samples: int
    bessel: bool = True

    def __post_init__(self):
        mean = _readonly(self.mean)
        var = _readonly(self.variance)
        cov = _readonly(self.covariance)
        corr = _readonly(self.correlation)
        m3 = _readonly(self.third_moment)
        k = mean.shape[0]
        s = int(self.n_samples)
        if var.shape != (k,) or m3.shape != (k,) or cov.shape != (k, k) or corr.shape != (k, k):
            raise DimensionError("inconsistent moment shapes")
        if abs(float(mean.sum()) - 1.0) > SIMPLEX_ATOL or (mean < -SIMPLEX_ATOL).any():
            raise ValidationError(f"mean off the simplex: sum={float(mean.sum())!r}")
        if not np.array_equal(var, np.diag(cov)):
            raise ValidationError("variance must equal the covariance diagonal exactly")
        rowsum = np.abs(cov.sum(axis=1)).max() if k else 0.0
        if rowsum > COV_ROWSUM_ATOL:
            raise ValidationError(
                f"covariance rows must sum to 0 (simplex constraint), got {rowsum!r}"
            )
        # Lemma-style bound; the Bessel estimator scales it by S/(S-1).
        factor = s / (s - 1.0) if self.bessel else 1.0
        bound = factor * mean * (1.0 - mean) + VAR_BOUND_ATOL
        if (var > bound).any():
            k_bad = int(np.argmax(var > bound))
            raise ValidationError(
                f"variance[{k_bad}]={var[k_bad]!r} exceeds the simplex bound {bound[k_bad]!r}"
            )
        if (np.abs(corr) > 1.0).any():
            raise ValidationError("correlation entries outside [-1, 1]")
        diag = np.diag(corr)
        want = np.where(var > 0.0, 1.0, 0.0)
        if not np.array_equal(diag, want):
            raise ValidationError("correlation diagonal must be 1 where variance > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "third_moment", m3)
        object.__setattr__(self, "n_samples", s)

    @property
    def n_classes(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    """All per-input uncertainty scores, in nats.

    ``policy_scores`` maps each of the ten deferral-policy names in
    ``POLICY_NAMES`` to its score (higher = defer).
    """

    entropy_of_mean: float
    expected_entropy: float
    mutual_information: float
    c_vector: np.ndarray
    c_sum: float
    c_third_order: np.ndarray
    rho: np.ndarray
    policy_scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        c = _readonly(self.c_vector)
        c3 = _readonly(self.c_third_order)
        rho = _readonly(self.rho)
        scalars = (
            self.entropy_of_mean,
            self.expected_entropy,
            self.mutual_information,
            self.c_sum,
        )
        if not all(np.isfinite(x) for x in scalars):
            raise ValidationError("non-finite scalar in uncertainty report")
        for name, arr in (("c_vector", c), ("c_third_order", c3), ("rho", rho)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entry in {name}")
        if (c < 0.0).any():
            raise ValidationError("c_vector must be nonnegative")
        if (rho < 0.0).any():
            raise ValidationError("rho must be nonnegative")
        if self.mutual_information < -MI_CLAMP_ATOL:
            raise ValidationError(
                f"mutual information {self.mutual_information!r} below -{MI_CLAMP_ATOL}"
            )
        for name, value in dict(self.policy_scores).items():
            if not np.isfinite(value):
                raise ValidationError(f"non-finite policy score {name}")
        object.__setattr__(self, "c_vector", c)
        object.__setattr__(self, "c_third_order", c3)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "policy_scores", dict(self.policy_scores))

    @property
    def n_classes(self) -> int:
        return self.c_vector.shape[0]


def as_float_array(values: Sequence[float], name: str = "values") -> np.ndarray:
    """1-d finite float64 view of a sequence; raises on anything else."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr
