"""Per-input uncertainty metrics.

Entropy decomposition, exact mutual information, the per-class epistemic
vector C_k = Var[p_k] / (2 mu_k) with its third-order diagnostic and
skewness indicator, the correlation-gated cross-boundary score, and the ten
deferral-policy scores.

Conventions, applied uniformly:
  * natural log everywhere, 0 * log 0 := 0;
  * eps = 1e-10 is added to every mu_k denominator (and squared for the
    mu_k^2 denominator), so the skewness indicator times the second-order
    term reproduces the third-order correction identically;
  * C_k, C_k^(3) and rho_k are all defined as 0 for classes with zero
    sample variance;
  * mutual information in [-1e-9, 0) is float cancellation and clamps to 0,
    anything below that is reported as corrupted input.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    EPS,
    MI_CLAMP_ATOL,
    POLICY_NAMES,
    ClassPartition,
    MetricError,
    MomentSummary,
    SampleTensor,
    UncertaintyReport,
    ValidationError,
)
from .moments import compute_moments


@dataclass(frozen=True)
class PolicyScore:
    """One deferral-policy score; higher means defer."""

    policy_name: str
    value: float

    def __post_init__(self):
        if self.policy_name not in POLICY_NAMES:
            raise ValidationError(f"unknown policy {self.policy_name!r}")
        if not np.isfinite(self.value) or self.value < 0.0:
            raise ValidationError(
                f"policy {self.policy_name} score must be finite and nonnegative, "
                f"got {self.value!r}"
            )


def entropy(p) -> float:
    """Shannon entropy -sum p log p in nats, with 0 log 0 := 0."""
    p = np.asarray(p, dtype=np.float64)
    pos = p > 0.0
    return float(-np.sum(p[pos] * np.log(p[pos])))


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    q = np.stack([p, 1.0 - p], axis=-1)
    out = np.zeros_like(q)
    pos = q > 0.0
    out[pos] = q[pos] * np.log(q[pos])
    return -out.sum(axis=-1)


def _column_mean(samples: np.ndarray) -> np.ndarray:
    # Columns with S equal values keep that exact value, so Dirac inputs
    # produce exactly zero disagreement downstream.
    mean = samples.mean(axis=0)
    constant = np.all(samples == samples[0], axis=0)
    return np.where(constant, samples[0], mean)


def _clamp_nonnegative(value: float, what: str) -> float:
    if value < 0.0:
        if value < -MI_CLAMP_ATOL:
            raise MetricError(f"{what} = {value!r}; input looks corrupted")
        return 0.0
    return value


def _expected_entropy(x: np.ndarray) -> float:
    logs = np.zeros_like(x)
    pos = x > 0.0
    logs[pos] = np.log(x[pos])
    return float(-(x * logs).sum(axis=1).mean())


def mutual_information_exact(samples) -> float:
    """H[mean] - (1/S) sum_s H[p^(s)], the exact epistemic term in nats."""
    x = np.asarray(samples, dtype=np.float64)
    mi = entropy(_column_mean(x)) - _expected_entropy(x)
    return _clamp_nonnegative(mi, "mutual information")


def c_vector(summary: MomentSummary) -> np.ndarray:
    """Per-class epistemic contributions C_k = Var[p_k] / (2 (mu_k + eps))."""
    var = summary.variance
    return np.where(var > 0.0, 0.5 * var / (summary.mean + EPS), 0.0)


def c_third_order(summary: MomentSummary) -> np.ndarray:
    """Third-order diagnostic C_k - m3_k / (6 (mu_k + eps)^2); may be negative."""
    var = summary.variance
    mu = summary.mean + EPS
    return np.where(
        var > 0.0,
        0.5 * var / mu - summary.third_moment / (6.0 * mu * mu),
        0.0,
    )


def skewness_rho(summary: MomentSummary) -> np.ndarray:
    """Reliability indicator rho_k = |m3_k| / (3 (mu_k + eps) Var[p_k]).

    This is exactly |third-order correction| / (second-order term); values
    above ~0.3 flag classes where C_k should be read with caution. Defined
    as 0 for zero-variance classes, which need no warning.
    """
    var = summary.variance
    safe_var = np.where(var > 0.0, var, 1.0)
    rho = np.abs(summary.third_moment) / (3.0 * (summary.mean + EPS) * safe_var)
    return np.where(var > 0.0, rho, 0.0)


def cbec(summary: MomentSummary, partition: ClassPartition, c: np.ndarray) -> float:
    """Cross-boundary epistemic confusion.

    Sum over safe x critical class pairs of sqrt(C_i C_j) gated by the
    negative part of the empirical correlation of p_i and p_j across passes.
    """
    partition.check_classes(summary.n_classes)
    safe = list(partition.safe_sorted)
    crit = list(partition.critical_sorted)
    if not safe or not crit:
        return 0.0
    gate = np.maximum(0.0, -summary.correlation[np.ix_(safe, crit)])
    cross = np.sqrt(np.outer(c[safe], c[crit]))
    return float((cross * gate).sum())


def ova_binary_mi(samples, partition: ClassPartition) -> float:
    """One-vs-all binary MI summed over the critical classes.

    Each class k is binarised to (p_k, 1 - p_k); the exact binary MI of that
    variable is accumulated. Empty critical set gives 0.
    """
    x = np.asarray(samples, dtype=np.float64)
    crit = list(partition.critical_sorted)
    if not crit:
        return 0.0
    mean = _column_mean(x)
    total = 0.0
    for k in crit:
        mi_k = float(_binary_entropy(mean[k]) - _binary_entropy(x[:, k]).mean())
        total += _clamp_nonnegative(mi_k, f"binary MI for class {k}")
    return total


def policy_scores(samples, summary: MomentSummary, c: np.ndarray,
                  partition: ClassPartition) -> list[PolicyScore]:
    """All ten deferral-policy scores, in canonical policy order.

    The critical-targeted policies need a partition with a nonempty
    critical set.
    """
    if partition is None:
        raise ValidationError("a class partition is required for the policy scores")
    partition.check_classes(summary.n_classes)
    crit = list(partition.critical_sorted)
    if not crit:
        raise ValidationError(
            "critical-targeted policies need a nonempty critical set"
        )
    var = summary.variance
    mu = summary.mean
    values = {
        "Entropy": entropy(mu),
        "MI": mutual_information_exact(samples),
        "MaxProb": max(0.0, 1.0 - float(mu.max())),
        "SaleEUGlobal": float(var.sum()),
        "VarCrit": float(var[crit].max()),
        "SaleEUCrit": float(var[crit].sum()),
        "OvAMI": ova_binary_mi(samples, partition),
        "CCritSum": float(c[crit].sum()),
        "CCritMax": float(c[crit].max()),
        "CBEC": cbec(summary, partition, c),
    }
    return [PolicyScore(name, values[name]) for name in POLICY_NAMES]


def report(tensor: SampleTensor, input_index: int,
           partition: ClassPartition) -> UncertaintyReport:
    """Assemble the full uncertainty report for one input."""
    samples = tensor.values[input_index]
    summary = compute_moments(tensor, input_index)
    c = c_vector(summary)
    scores = policy_scores(samples, summary, c, partition)
    h_mean = entropy(_column_mean(samples))
    mi = next(s.value for s in scores if s.policy_name == "MI")
    return UncertaintyReport(
        entropy_of_mean=h_mean,
        expected_entropy=_expected_entropy(samples),
        mutual_information=mi,
        c_vector=c,
        c_sum=float(c.sum()),
        c_third_order=c_third_order(summary),
        rho=skewness_rho(summary),
        policy_scores={s.policy_name: s.value for s in scores},
    )


def report_all(tensor: SampleTensor, partition: ClassPartition,
               threads: int = 1) -> list[UncertaintyReport]:
    """Reports for every input; parallel over inputs when threads > 1.

    Per-input computation is pure, so the thread count never changes the
    result, only the wall time.
    """
    indices = range(tensor.n_inputs)
    if threads <= 1 or tensor.n_inputs < 2:
        return [report(tensor, i, partition) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: report(tensor, i, partition), indices))


def c_sum_top_k(c: np.ndarray, mean: np.ndarray, k: int) -> float:
    """Truncated aggregate: sum of C over the k largest-mean classes."""
    if k < 1:
        raise ValidationError("top-k truncation needs k >= 1")
    order = np.argsort(-mean, kind="stable")[: min(k, mean.shape[0])]
    return float(c[order].sum())


def c_sum_weighted(c: np.ndarray, mean: np.ndarray) -> float:
    """Probability-weighted aggregate sum_k mu_k C_k."""
    return float(np.dot(mean, c))
