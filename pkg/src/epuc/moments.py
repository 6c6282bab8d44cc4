"""Per-input moment estimation from a SampleTensor.

mean uses 1/S, covariance uses 1/(S-1) by default (``bessel=False`` gives
the population 1/S normalisation for oracle cross-checks), and the third
central moment always uses 1/S. The asymmetry between the covariance and
third-moment normalisations is deliberate and preserved exactly.
"""

from __future__ import annotations

import numpy as np

from .core import MomentSummary, SampleTensor


def compute_moments(tensor: SampleTensor, input_index: int, bessel: bool = True) -> MomentSummary:
    """Moment summary for one input.

    Correlation is Cov_ij / (sigma_i * sigma_j), defined as 0 whenever either
    standard deviation vanishes; the diagonal is set to exactly 1 where the
    variance is positive and off-diagonal entries are clipped to [-1, 1]
    against rounding overshoot. Columns whose S values are all equal get
    exactly zero deviations, so degenerate spreads yield variance exactly 0
    rather than rounding residue.
    """
    x = tensor.values[input_index]
    s = tensor.n_samples
    mean = x.mean(axis=0)
    constant = np.all(x == x[0], axis=0)
    mean = np.where(constant, x[0], mean)
    dev = x - mean
    denom = (s - 1) if bessel else s
    cov = dev.T @ dev / denom
    # BLAS does not guarantee a bitwise-symmetric product; enforce it.
    cov = 0.5 * (cov + cov.T)
    var = np.diag(cov).copy()
    np.fill_diagonal(cov, var)
    m3 = (dev**3).sum(axis=0) / s

    sd = np.sqrt(var)
    outer = np.outer(sd, sd)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(outer > 0.0, cov / np.where(outer > 0.0, outer, 1.0), 0.0)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, np.where(var > 0.0, 1.0, 0.0))

    return MomentSummary(
        mean=mean,
        variance=var,
        covariance=cov,
        correlation=corr,
        third_moment=m3,
        n_samples=s,
        bessel=bessel,
    )


def compute_all_moments(tensor: SampleTensor, bessel: bool = True) -> list[MomentSummary]:
    """Moment summaries for every input, in input order."""
    return [compute_moments(tensor, i, bessel=bessel) for i in range(tensor.n_inputs)]
