"""Aleatoric/epistemic disentanglement across a label-noise sweep.

The artifact does not inject noise or train anything: a sweep is a set of
ingested tensors, one per noise rate alpha, and this module turns each into
mean uncertainties and relative ratios. A ratio of 0 means the epistemic
mean ignored the aleatoric shift entirely; 1 means it moved in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EpucError, SampleTensor, ValidationError
from .metrics import (
    _expected_entropy,
    c_sum_top_k,
    c_sum_weighted,
    c_vector,
    mutual_information_exact,
)
from .moments import compute_moments

CSUM_MODES = ("full", "top_k", "weighted")


class UndefinedRatioError(EpucError):
    """A disentanglement ratio is undefined (zero baseline or zero delta)."""


@dataclass(frozen=True)
class NoiseSweepPoint:
    """Mean uncertainties of one sweep tensor at noise rate alpha."""

    alpha: float
    mean_aleatoric: float
    mean_epistemic_mi: float
    mean_epistemic_csum: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"noise rate {self.alpha!r} outside [0, 1]")
        for name in ("mean_aleatoric", "mean_epistemic_mi", "mean_epistemic_csum"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValidationError(f"{name} must be finite and nonnegative, got {v!r}")

    def epistemic(self, metric: str) -> float:
        if metric == "mi":
            return self.mean_epistemic_mi
        if metric == "c_sum":
            return self.mean_epistemic_csum
        raise ValidationError(f"unknown epistemic metric {metric!r}")


def sweep_point(tensor: SampleTensor, alpha: float = 0.0,
                csum_mode: str = "full", top_k: int | None = None) -> NoiseSweepPoint:
    """Dataset means: aleatoric = mean per-pass entropy, epistemic under
    both exact MI and the per-class aggregate.

    ``csum_mode`` selects the aggregate used for the epistemic mean:
    the plain sum, the truncated sum over the top-k largest-mean classes,
    or the probability-weighted sum (the two high-K mitigations).
    """
    if csum_mode not in CSUM_MODES:
        raise ValidationError(f"unknown c_sum mode {csum_mode!r}")
    if tensor.n_inputs == 0:
        raise ValidationError("sweep point needs a nonempty tensor")
    aleatoric = 0.0
    mi = 0.0
    csum = 0.0
    for i in range(tensor.n_inputs):
        samples = tensor.values[i]
        aleatoric += _expected_entropy(samples)
        mi += mutual_information_exact(samples)
        summary = compute_moments(tensor, i)
        c = c_vector(summary)
        if csum_mode == "full":
            csum += float(c.sum())
        elif csum_mode == "top_k":
            if top_k is None:
                raise ValidationError("top_k mode needs an explicit k")
            csum += c_sum_top_k(c, summary.mean, top_k)
        else:
            csum += c_sum_weighted(c, summary.mean)
    n = tensor.n_inputs
    return NoiseSweepPoint(
        alpha=alpha,
        mean_aleatoric=aleatoric / n,
        mean_epistemic_mi=mi / n,
        mean_epistemic_csum=csum / n,
    )


def relative_ratio(baseline: NoiseSweepPoint, noisy: NoiseSweepPoint,
                   metric: str = "mi") -> float:
    """Relative disentanglement ratio: percent epistemic change per percent
    aleatoric change between the baseline and the noisy point.

    Undefined (raises, never silently 0) when a baseline mean is zero or
    the aleatoric delta vanishes.
    """
    ue0 = baseline.epistemic(metric)
    ua0 = baseline.mean_aleatoric
    if ue0 <= 0.0:
        raise UndefinedRatioError(f"baseline epistemic mean ({metric}) is zero")
    if ua0 <= 0.0:
        raise UndefinedRatioError("baseline aleatoric mean is zero")
    da = noisy.mean_aleatoric - ua0
    if da == 0.0:
        raise UndefinedRatioError("aleatoric delta is zero")
    de = noisy.epistemic(metric) - ue0
    return (de / ue0) / (da / ua0)


def absolute_ratio(baseline: NoiseSweepPoint, noisy: NoiseSweepPoint,
                   metric: str = "mi") -> float:
    """Absolute-delta variant of the ratio, kept only for comparison.

    Confounded by the scale of the epistemic mean, so nothing in the
    pipeline is built on it; same signature and undefined cases as
    relative_ratio.
    """
    da = noisy.mean_aleatoric - baseline.mean_aleatoric
    if da == 0.0:
        raise UndefinedRatioError("aleatoric delta is zero")
    return (noisy.epistemic(metric) - baseline.epistemic(metric)) / da


def baseline_inflation(point: NoiseSweepPoint) -> float:
    """Aggregate-over-MI ratio at the clean point; > 1 means the sum
    overshoots exact MI."""
    if point.mean_epistemic_mi <= 0.0:
        raise UndefinedRatioError("MI mean is zero")
    return point.mean_epistemic_csum / point.mean_epistemic_mi
