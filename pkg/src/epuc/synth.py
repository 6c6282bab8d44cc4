"""Synthetic second-order distributions with closed-form population moments.

These are the independent oracle for the axiom and Taylor-fidelity tests:
the aggregate epistemic value here is computed from *population* moments,
deliberately bypassing the Bessel correction and the eps stabilisation of
the empirical path, so the two routes cross-validate each other.

Four kinds: a Dirac mass on the simplex, a finite mixture of Dirac masses,
a Dirichlet, and the uniform mixture of the K vertex Dirac masses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, ValidationError

_SUPPORT_ATOL = 1e-9
_MIN_DIRICHLET_ALPHA = 1e-3


def _check_point(theta: np.ndarray, what: str) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] < 2:
        raise DimensionError(f"{what} must be a vector of length >= 2")
    if (theta < -_SUPPORT_ATOL).any() or (theta > 1.0 + _SUPPORT_ATOL).any():
        raise ValidationError(f"{what} has coordinates outside [0, 1]: {theta}")
    if abs(float(theta.sum()) - 1.0) > _SUPPORT_ATOL:
        raise ValidationError(f"{what} is off the simplex: sum={float(theta.sum())!r}")
    theta = np.clip(theta, 0.0, 1.0)
    theta.setflags(write=False)
    return theta


@dataclass(frozen=True, eq=False)
class DiracAt:
    """Point mass at a single probability vector."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_point(self.theta, "Dirac location"))

    @property
    def n_classes(self) -> int:
        return self.theta.shape[0]

    def population_mean(self) -> np.ndarray:
        return self.theta.copy()

    def population_variance(self) -> np.ndarray:
        return np.zeros(self.n_classes)

    def population_third_moment(self) -> np.ndarray:
        return np.zeros(self.n_classes)

    def draw(self, s: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(self.theta, (s, 1))


@dataclass(frozen=True, eq=False)
class FiniteMixture:
    """Mixture of Dirac masses at ``points`` with the given weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 2:
            raise DimensionError("mixture points must be M x K with M >= 1, K >= 2")
        if w.shape != (pts.shape[0],):
            raise DimensionError("one weight per support point required")
        if (w < 0.0).any() or abs(float(w.sum()) - 1.0) > _SUPPORT_ATOL:
            raise ValidationError(f"mixture weights must be nonnegative and sum to 1, got {w}")
        pts = np.stack([_check_point(p, f"support point {m}") for m, p in enumerate(pts)])
        pts.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n_classes(self) -> int:
        return self.points.shape[1]

    def population_mean(self) -> np.ndarray:
        # Columns whose support values coincide keep that exact value, so a
        # degenerate mixture has exactly zero central moments.
        mu = self.weights @ self.points
        constant = np.all(self.points == self.points[0], axis=0)
        return np.where(constant, self.points[0], mu)

    def population_variance(self) -> np.ndarray:
        mu = self.population_mean()
        return self.weights @ (self.points - mu) ** 2

    def population_third_moment(self) -> np.ndarray:
        mu = self.population_mean()
        return self.weights @ (self.points - mu) ** 3

    def draw(self, s: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.points.shape[0], size=s, p=self.weights)
        return self.points[idx]


@dataclass(frozen=True, eq=False)
class Dirichlet:
    """Dirichlet distribution on the simplex; alpha >= 1e-3 elementwise.

    Smaller concentrations underflow the gamma sampler, so they are
    rejected at construction.
    """

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 1 or a.shape[0] < 2:
            raise DimensionError("alpha must be a vector of length >= 2")
        if (a < _MIN_DIRICHLET_ALPHA).any():
            raise ValidationError(
                f"Dirichlet alpha must be >= {_MIN_DIRICHLET_ALPHA} elementwise"
            )
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def n_classes(self) -> int:
        return self.alpha.shape[0]

    def population_mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def population_variance(self) -> np.ndarray:
        a0 = self.alpha.sum()
        mu = self.alpha / a0
        return mu * (1.0 - mu) / (a0 + 1.0)

    def population_third_moment(self) -> np.ndarray:
        # Marginals are Beta(a, a0 - a); central third moment of Beta(a, b)
        # is 2ab(b - a) / ((a+b)^3 (a+b+1) (a+b+2)).
        a = self.alpha
        a0 = a.sum()
        b = a0 - a
        return 2.0 * a * b * (b - a) / (a0**3 * (a0 + 1.0) * (a0 + 2.0))

    def draw(self, s: int, rng: np.random.Generator) -> np.ndarray:
        # Per-class gamma draws normalised to the simplex; rows whose gamma
        # draws all underflow to zero are redrawn.
        out = rng.standard_gamma(self.alpha, size=(s, self.n_classes))
        sums = out.sum(axis=1)
        while (sums == 0.0).any():
            dead = np.flatnonzero(sums == 0.0)
            out[dead] = rng.standard_gamma(self.alpha, size=(dead.size, self.n_classes))
            sums = out.sum(axis=1)
        return out / sums[:, None]


@dataclass(frozen=True)
class VertexMixture:
    """Uniform mixture of the K vertex Dirac masses."""

    n_classes: int

    def __post_init__(self):
        if int(self.n_classes) < 2:
            raise DimensionError("vertex mixture needs K >= 2")
        object.__setattr__(self, "n_classes", int(self.n_classes))

    def population_mean(self) -> np.ndarray:
        return np.full(self.n_classes, 1.0 / self.n_classes)

    def population_variance(self) -> np.ndarray:
        k = self.n_classes
        return np.full(k, (k - 1.0) / k**2)

    def population_third_moment(self) -> np.ndarray:
        k = self.n_classes
        return np.full(k, (k - 1.0) * (k - 2.0) / k**3)

    def draw(self, s: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.n_classes, size=s)
        out = np.zeros((s, self.n_classes))
        out[np.arange(s), idx] = 1.0
        return out


AnalyticDistribution = DiracAt | FiniteMixture | Dirichlet | VertexMixture


def sample(dist: AnalyticDistribution, s: int, seed: int) -> np.ndarray:
    """S i.i.d. draws from the distribution; deterministic given the seed.

    Uses numpy's PCG64 generator, so draws are reproducible across
    platforms for a fixed numpy major line.
    """
    if s < 1:
        raise DimensionError("need at least one draw")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return dist.draw(s, rng)


def analytic_eu(dist: AnalyticDistribution) -> float:
    """Aggregate epistemic value sum_k Var[p_k] / (2 mu_k) from population moments.

    No Bessel correction and no eps: classes with zero population variance
    contribute exactly 0 (which covers mu_k = 0, where the variance vanishes
    too).
    """
    mu = dist.population_mean()
    var = dist.population_variance()
    active = var > 0.0
    return float(0.5 * np.sum(var[active] / mu[active]))


def _as_mixture(dist: AnalyticDistribution) -> FiniteMixture:
    if isinstance(dist, FiniteMixture):
        return dist
    if isinstance(dist, DiracAt):
        return FiniteMixture(dist.theta[None, :], np.ones(1))
    if isinstance(dist, VertexMixture):
        k = dist.n_classes
        return FiniteMixture(np.eye(k), np.full(k, 1.0 / k))
    raise ValidationError(f"{type(dist).__name__} has no finite support")


def mps_transform(dist, spread: float, class_pair: tuple[int, int]) -> FiniteMixture:
    """Mean-preserving spread along the (i, j) class-difference direction.

    Every support point splits into two equal-weight points displaced by
    +/- spread * (e_i - e_j). The population mean is unchanged and the
    variance of classes i and j grows by spread^2. Raises when a displaced
    point would leave the simplex.
    """
    mix = _as_mixture(dist)
    if spread < 0.0:
        raise ValidationError("spread must be nonnegative")
    i, j = class_pair
    k = mix.n_classes
    if not (0 <= i < k and 0 <= j < k) or i == j:
        raise ValidationError(f"class pair {class_pair!r} invalid for K={k}")
    if spread == 0.0:
        return mix
    z = np.zeros(k)
    z[i], z[j] = spread, -spread
    points = np.concatenate([mix.points + z, mix.points - z])
    weights = np.concatenate([mix.weights, mix.weights]) * 0.5
    if (points < -_SUPPORT_ATOL).any() or (points > 1.0 + _SUPPORT_ATOL).any():
        raise ValidationError(
            f"spread {spread} on classes {class_pair} pushes support off the simplex"
        )
    return FiniteMixture(points, weights)


def replicate_mixture(mix: FiniteMixture, n_inputs: int):
    """SampleTensor whose every input realises the mixture support exactly.

    Only valid for uniform weights: the S = M passes of each input are the
    M support points, so the empirical population moments coincide with the
    mixture's population moments to rounding.
    """
    from .core import validate_tensor

    m = mix.points.shape[0]
    if not np.all(mix.weights == mix.weights[0]):
        raise ValidationError("exact replication needs uniform mixture weights")
    values = np.tile(mix.points, (n_inputs, 1, 1))
    return validate_tensor(values)


def two_point_mixture_for_mi(mean0: float, target_mi: float,
                             tol: float = 1e-14) -> FiniteMixture:
    """Binary equal-weight two-point mixture whose exact MI hits a target.

    Support is {(m - d, 1 - m + d), (m + d, 1 - m - d)}; the half-spread d
    is solved by bisection, using that MI grows monotonically with d.
    """
    if not 0.0 < mean0 < 1.0:
        raise ValidationError("mean0 must lie strictly inside (0, 1)")

    def h2(p):
        out = 0.0
        for q in (p, 1.0 - p):
            if q > 0.0:
                out -= q * np.log(q)
        return out

    def mi(d):
        return h2(mean0) - 0.5 * (h2(mean0 - d) + h2(mean0 + d))

    hi = min(mean0, 1.0 - mean0)
    if not 0.0 < target_mi < mi(hi):
        raise ValidationError(
            f"target MI {target_mi!r} unreachable for mean {mean0!r}"
        )
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mi(mid) < target_mi:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    d = 0.5 * (lo + hi)
    points = np.array(
        [[mean0 - d, 1.0 - mean0 + d], [mean0 + d, 1.0 - mean0 - d]]
    )
    return FiniteMixture(points, np.array([0.5, 0.5]))


def location_shift(dist, z) -> FiniteMixture:
    """Spread-preserving translation of every support point by z (sum(z) = 0).

    Population variances are unchanged; raises when the shifted support
    leaves the simplex.
    """
    mix = _as_mixture(dist)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (mix.n_classes,):
        raise DimensionError("shift vector must have one entry per class")
    if abs(float(z.sum())) > _SUPPORT_ATOL:
        raise ValidationError(f"shift must sum to 0, got {float(z.sum())!r}")
    points = mix.points + z
    if (points < -_SUPPORT_ATOL).any() or (points > 1.0 + _SUPPORT_ATOL).any():
        raise ValidationError("shift pushes support off the simplex")
    return FiniteMixture(points, mix.weights)
