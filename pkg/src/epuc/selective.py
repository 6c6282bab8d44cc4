"""Selective-prediction evaluation.

Coverage sweeps with the clinical risk metrics, trapezoidal AUSC, paired
bootstrap comparison of deferral policies, and the interpretability
artefacts (epistemic profiles, error signatures, the epistemic confusion
matrix, and per-class reliability statistics).

Deferral semantics: higher score = defer. A deferral order sorts inputs
ascending by score (kept first), ties broken by input index. At coverage c
the first ceil(c * N) inputs in that order are retained; kept counts are
computed in integer arithmetic so grid points like c = 0.8 never gain a
sample to float rounding.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    ClassPartition,
    DimensionError,
    LabelSet,
    UncertaintyReport,
    ValidationError,
    as_float_array,
)

RISK_FIELDS = ("critical_fnr", "critical_err", "accuracy", "macro_f1")

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True, eq=False)
class RiskCurve:
    """Risk metrics on the retained set at each coverage level."""

    policy_name: str
    coverage_grid: np.ndarray
    critical_fnr: np.ndarray
    critical_err: np.ndarray
    accuracy: np.ndarray
    macro_f1: np.ndarray
    kept_total: np.ndarray
    kept_critical: np.ndarray
    n_inputs: int

    def __post_init__(self):
        grid = np.asarray(self.coverage_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 1:
            raise DimensionError("coverage grid must be a nonempty vector")
        if not np.all(np.diff(grid) > 0.0):
            raise ValidationError("coverage grid must be strictly increasing")
        g = grid.size
        n = int(self.n_inputs)
        expect_kept = (np.arange(1, g + 1, dtype=np.int64) * n + g - 1) // g
        kept = np.asarray(self.kept_total, dtype=np.int64)
        if not np.array_equal(kept, expect_kept):
            raise ValidationError("kept counts must equal ceil(c * N) at each grid point")
        for name in RISK_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != grid.shape:
                raise DimensionError(f"{name} length does not match the grid")
            if ((arr < 0.0) | (arr > 1.0)).any():
                raise ValidationError(f"{name} outside [0, 1]")
        for field in (
            "coverage_grid",
            "critical_fnr",
            "critical_err",
            "accuracy",
            "macro_f1",
            "kept_total",
            "kept_critical",
        ):
            arr = np.asarray(getattr(self, field))
            arr = arr.astype(np.int64) if field.startswith("kept") else arr.astype(np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)


@dataclass(frozen=True, eq=False)
class BootstrapSummary:
    """Paired bootstrap AUSC comparison across policies.

    ``win_matrix[i, j]`` is the fraction of shared resamples in which
    policy i achieves strictly lower AUSC than policy j, ties counted 0.5.
    """

    policies: tuple[str, ...]
    n_resamples: int
    seed: int
    risk_field: str
    ausc_mean: np.ndarray
    ausc_std: np.ndarray
    ausc_ci95: np.ndarray
    win_matrix: np.ndarray

    def __post_init__(self):
        p = len(self.policies)
        ci = np.asarray(self.ausc_ci95, dtype=np.float64)
        if ci.shape != (p, 2):
            raise DimensionError("ausc_ci95 must be P x 2")
        if (ci[:, 0] > ci[:, 1]).any():
            raise ValidationError("confidence interval bounds out of order")
        win = np.asarray(self.win_matrix, dtype=np.float64)
        if win.shape != (p, p):
            raise DimensionError("win matrix must be P x P")
        for field in ("ausc_mean", "ausc_std", "ausc_ci95", "win_matrix"):
            arr = np.asarray(getattr(self, field), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)


@dataclass(frozen=True, eq=False)
class EpistemicConfusionMatrix:
    """Mean correlation-gated geometric-mean confusion between class pairs."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionError("confusion matrix must be square")
        if not np.array_equal(e, e.T):
            raise ValidationError("confusion matrix must be symmetric")
        if np.diag(e).any():
            raise ValidationError("confusion matrix diagonal must be zero")
        if (e < 0.0).any():
            raise ValidationError("confusion entries must be nonnegative")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


@dataclass(frozen=True, eq=False)
class ProfileMatrix:
    """Per-true-class mean of the normalised epistemic shares C_k / sum_j C_j.

    Rows for classes with no contributing inputs (absent class, or every
    input Dirac) are NaN and flagged by a zero count.
    """

    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = np.asarray(self.counts, dtype=np.int64)
        if v.ndim != 2 or n.shape != (v.shape[0],):
            raise DimensionError("profile matrix must be K x K with K counts")
        present = n > 0
        if present.any():
            sums = v[present].sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-9:
                raise ValidationError("present profile rows must sum to 1")
        if not np.all(np.isnan(v[~present])):
            raise ValidationError("absent profile rows must be NaN")
        v = v.copy()
        v.setflags(write=False)
        n = n.copy()
        n.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "counts", n)


@dataclass(frozen=True, eq=False)
class SignatureCell:
    """Mean C vector over inputs with a given (true, predicted) pair."""

    count: int
    c_mean: np.ndarray


@dataclass(frozen=True)
class ReliabilityStats:
    """Distribution summary of one class's skewness indicator."""

    count: int
    median: float
    mean: float
    p90: float
    fraction_below: float


def deferral_order(scores) -> np.ndarray:
    """Kept-first permutation: ascending score, ties by input index."""
    arr = as_float_array(scores, "scores")
    return np.argsort(arr, kind="stable")


def _membership(labels: np.ndarray, classes) -> np.ndarray:
    if not classes:
        return np.zeros(labels.shape, dtype=bool)
    return np.isin(labels, sorted(classes))


def _risk_arrays(y, yhat, partition: ClassPartition, n_classes: int,
                 order: np.ndarray, grid_size: int):
    n = y.shape[0]
    if n == 0:
        raise ValidationError("selective evaluation needs a nonempty dataset")
    if grid_size < 1:
        raise ValidationError("grid size must be >= 1")
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValidationError("order must be a permutation of the input indices")
    y = y[order]
    yhat = yhat[order]

    is_crit = _membership(y, partition.critical)
    pred_safe = ~_membership(yhat, partition.critical)
    miss = is_crit & pred_safe
    crit_err = is_crit & (yhat != y)
    correct = yhat == y

    cum_crit = np.cumsum(is_crit)
    cum_miss = np.cumsum(miss)
    cum_crit_err = np.cumsum(crit_err)
    cum_correct = np.cumsum(correct)

    eye = np.eye(n_classes, dtype=np.int64)
    cum_true = np.cumsum(eye[y], axis=0)
    cum_pred = np.cumsum(eye[yhat], axis=0)
    cum_tp = np.cumsum(eye[y] * eye[yhat], axis=0)

    g = grid_size
    kept = (np.arange(1, g + 1, dtype=np.int64) * n + g - 1) // g
    idx = kept - 1

    kept_crit = cum_crit[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        fnr = np.where(kept_crit > 0, cum_miss[idx] / np.maximum(kept_crit, 1), 0.0)
        cerr = np.where(kept_crit > 0, cum_crit_err[idx] / np.maximum(kept_crit, 1), 0.0)
    acc = cum_correct[idx] / kept

    tp = cum_tp[idx].astype(np.float64)
    npred = cum_pred[idx].astype(np.float64)
    ntrue = cum_true[idx].astype(np.float64)
    prec = np.where(npred > 0, tp / np.maximum(npred, 1.0), 0.0)
    rec = np.where(ntrue > 0, tp / np.maximum(ntrue, 1.0), 0.0)
    pr = prec + rec
    f1 = np.where(pr > 0, 2.0 * prec * rec / np.where(pr > 0, pr, 1.0), 0.0)
    macro = f1.mean(axis=1)

    grid = np.arange(1, g + 1, dtype=np.float64) / g
    return grid, fnr, cerr, acc, macro, kept, kept_crit


def risk_curve(order, labels: LabelSet, partition: ClassPartition,
               grid_size: int = 200, policy_name: str = "") -> RiskCurve:
    """Risk metrics at ``grid_size`` equally spaced coverage levels in (0, 1].

    Critical FNR counts retained critical-class samples predicted as
    non-critical over retained critical-class samples; Critical Err counts
    any misprediction on that same denominator. Both are defined as 0 when
    no critical sample is retained.
    """
    partition.check_classes(labels.n_classes)
    order = np.asarray(order, dtype=np.int64)
    grid, fnr, cerr, acc, macro, kept, kept_crit = _risk_arrays(
        labels.true_labels, labels.predicted_labels, partition,
        labels.n_classes, order, grid_size,
    )
    return RiskCurve(
        policy_name=policy_name,
        coverage_grid=grid,
        critical_fnr=fnr,
        critical_err=cerr,
        accuracy=acc,
        macro_f1=macro,
        kept_total=kept,
        kept_critical=kept_crit,
        n_inputs=len(labels),
    )


def ausc(curve: RiskCurve, risk_field: str = "critical_fnr") -> float:
    """Trapezoidal area under the chosen risk over the coverage grid.

    The grid spans (0, 1]; the integral runs from the first grid point, so
    a constant risk r on the default 200-point grid gives r * 0.995.
    """
    if risk_field not in RISK_FIELDS:
        raise ValidationError(f"unknown risk field {risk_field!r}")
    return float(_trapezoid(getattr(curve, risk_field), curve.coverage_grid))


def _ausc_row(y, yhat, partition, n_classes, score_columns, grid_size, risk_field, rng):
    n = y.shape[0]
    idx = rng.integers(0, n, size=n)
    out = np.empty(len(score_columns))
    field_pos = {"critical_fnr": 1, "critical_err": 2, "accuracy": 3, "macro_f1": 4}[risk_field]
    for p, scores in enumerate(score_columns):
        order = np.argsort(scores[idx], kind="stable")
        parts = _risk_arrays(y[idx], yhat[idx], partition, n_classes, order, grid_size)
        out[p] = _trapezoid(parts[field_pos], parts[0])
    return out


def bootstrap(scores_by_policy, labels: LabelSet, partition: ClassPartition,
              n_resamples: int = 200, seed: int = 0, grid_size: int = 200,
              risk_field: str = "critical_fnr", threads: int = 1) -> BootstrapSummary:
    """Paired bootstrap of per-policy AUSC.

    Input indices are resampled with replacement once per replicate and the
    same indices are reused for every policy, which is what makes the
    pairwise win matrix meaningful. Replicate r draws from the PCG64
    substream spawned as child r of SeedSequence(seed), so the result is
    deterministic and independent of the thread count.
    """
    if risk_field not in RISK_FIELDS:
        raise ValidationError(f"unknown risk field {risk_field!r}")
    if n_resamples < 1:
        raise ValidationError("need at least one bootstrap resample")
    names = tuple(scores_by_policy)
    columns = [as_float_array(scores_by_policy[name], name) for name in names]
    n = len(labels)
    if n < 1:
        raise ValidationError("bootstrap needs a nonempty dataset")
    for name, col in zip(names, columns):
        if col.shape[0] != n:
            raise DimensionError(f"policy {name}: {col.shape[0]} scores for {n} inputs")
    partition.check_classes(labels.n_classes)

    children = np.random.SeedSequence(seed).spawn(n_resamples)
    y = labels.true_labels
    yhat = labels.predicted_labels

    def one(r):
        rng = np.random.Generator(np.random.PCG64(children[r]))
        return _ausc_row(y, yhat, partition, labels.n_classes, columns,
                         grid_size, risk_field, rng)

    if threads <= 1 or n_resamples < 2:
        rows = [one(r) for r in range(n_resamples)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(n_resamples)))
    mat = np.vstack(rows)

    p = len(names)
    win = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            less = mat[:, i] < mat[:, j]
            tie = mat[:, i] == mat[:, j]
            win[i, j] = float(less.mean() + 0.5 * tie.mean())
    ci = np.stack(
        [np.percentile(mat, 2.5, axis=0), np.percentile(mat, 97.5, axis=0)], axis=1
    )
    return BootstrapSummary(
        policies=names,
        n_resamples=n_resamples,
        seed=seed,
        risk_field=risk_field,
        ausc_mean=mat.mean(axis=0),
        ausc_std=mat.std(axis=0),
        ausc_ci95=ci,
        win_matrix=win,
    )


def _c_matrix(reports: list[UncertaintyReport]) -> np.ndarray:
    if not reports:
        raise ValidationError("need at least one report")
    return np.vstack([r.c_vector for r in reports])


def epistemic_profiles(reports, labels: LabelSet) -> ProfileMatrix:
    """Mean normalised epistemic share per true class.

    Inputs whose C vector sums to zero carry no share and are excluded;
    classes left with no contributing inputs are flagged absent.
    """
    c = _c_matrix(reports)
    if c.shape[0] != len(labels):
        raise DimensionError("one report per label required")
    k = labels.n_classes
    sums = c.sum(axis=1)
    include = sums > 0.0
    shares = np.zeros_like(c)
    shares[include] = c[include] / sums[include, None]
    values = np.full((k, k), np.nan)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(k):
        rows = include & (labels.true_labels == i)
        counts[i] = int(rows.sum())
        if counts[i]:
            values[i] = shares[rows].mean(axis=0)
    return ProfileMatrix(values, counts)


def error_signatures(reports, labels: LabelSet) -> dict[tuple[int, int], SignatureCell]:
    """Mean C vector per (true, predicted) cell; empty cells are absent keys."""
    c = _c_matrix(reports)
    if c.shape[0] != len(labels):
        raise DimensionError("one report per label required")
    out: dict[tuple[int, int], SignatureCell] = {}
    pairs = np.stack([labels.true_labels, labels.predicted_labels], axis=1)
    for i, j in sorted({tuple(p) for p in pairs.tolist()}):
        rows = (labels.true_labels == i) & (labels.predicted_labels == j)
        out[(i, j)] = SignatureCell(int(rows.sum()), c[rows].mean(axis=0))
    return out


def epistemic_confusion(c_vectors, correlations) -> EpistemicConfusionMatrix:
    """Average of sqrt(C_i C_j) * max(0, -rho_ij) over inputs.

    Symmetric with an exactly zero diagonal: a class is never epistemically
    confused with itself (rho_kk = 1 closes the gate, and zero-variance
    classes have C_k = 0).
    """
    c_list = list(c_vectors)
    corr_list = list(correlations)
    if not c_list or len(c_list) != len(corr_list):
        raise ValidationError("need matching, nonempty C vectors and correlations")
    k = np.asarray(c_list[0]).shape[0]
    total = np.zeros((k, k))
    for c, corr in zip(c_list, corr_list):
        c = np.asarray(c, dtype=np.float64)
        gate = np.maximum(0.0, -np.asarray(corr, dtype=np.float64))
        total += np.sqrt(np.outer(c, c)) * gate
    entries = total / len(c_list)
    np.fill_diagonal(entries, 0.0)
    return EpistemicConfusionMatrix(entries)


def reliability_summary(reports, labels: LabelSet,
                        threshold: float = 0.3) -> list[ReliabilityStats | None]:
    """Per-true-class statistics of the class's own skewness indicator.

    Entry k summarises rho_k over inputs with true label k: median, mean,
    90th percentile (linear interpolation) and the fraction strictly below
    the threshold. Classes with no inputs map to None.
    """
    rho = np.vstack([r.rho for r in reports])
    if rho.shape[0] != len(labels):
        raise DimensionError("one report per label required")
    out: list[ReliabilityStats | None] = []
    for k in range(labels.n_classes):
        vals = rho[labels.true_labels == k, k]
        if vals.size == 0:
            out.append(None)
            continue
        out.append(
            ReliabilityStats(
                count=int(vals.size),
                median=float(np.median(vals)),
                mean=float(vals.mean()),
                p90=float(np.percentile(vals, 90)),
                fraction_below=float(np.mean(vals < threshold)),
            )
        )
    return out
