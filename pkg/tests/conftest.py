import numpy as np
import pytest

from epuc import MomentSummary, validate_tensor


def one_input(rows):
    """SampleTensor with a single input whose passes are the given rows."""
    return validate_tensor(np.asarray(rows, dtype=np.float64)[None, :, :])


def binary_summary(mean0, var, m3_0=0.0, bessel=False, n_samples=2):
    """K=2 MomentSummary with equal per-class variance.

    The simplex constraint forces the covariance off-diagonal to -var and
    the class-1 third moment to -m3_0.
    """
    mean = np.array([mean0, 1.0 - mean0])
    variance = np.array([var, var])
    cov = np.array([[var, -var], [-var, var]])
    if var > 0:
        corr = np.array([[1.0, -1.0], [-1.0, 1.0]])
    else:
        corr = np.zeros((2, 2))
    return MomentSummary(
        mean=mean,
        variance=variance,
        covariance=cov,
        correlation=corr,
        third_moment=np.array([m3_0, -m3_0]),
        n_samples=n_samples,
        bessel=bessel,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
