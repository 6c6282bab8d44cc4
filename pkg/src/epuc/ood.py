"""Out-of-distribution detection evaluation.

AUROC is the Mann-Whitney probability that a random OoD score exceeds a
random ID score, ties counted one half. The rank-based implementation runs
in O((n+m) log(n+m)) and matches the O(n*m) pairwise count exactly; the
brute force survives as the test oracle.
"""

from __future__ import annotations

import numpy as np

from .core import UncertaintyReport, ValidationError, as_float_array


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    n = values.shape[0]
    sorter = np.argsort(values, kind="stable")
    inv = np.empty(n, dtype=np.int64)
    inv[sorter] = np.arange(n)
    sv = values[sorter]
    new_group = np.r_[True, sv[1:] != sv[:-1]]
    group = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    ends = np.r_[starts[1:], n]
    avg = 0.5 * (starts + ends + 1)
    return avg[group[inv]]


def auroc(id_scores, ood_scores) -> float:
    """P(ood score > id score) with ties counted 0.5."""
    a = as_float_array(id_scores, "id scores")
    b = as_float_array(ood_scores, "ood scores")
    if a.size == 0 or b.size == 0:
        raise ValidationError("AUROC needs nonempty ID and OoD score lists")
    ranks = _average_ranks(np.concatenate([a, b]))
    u = float(ranks[a.size:].sum()) - b.size * (b.size + 1) / 2.0
    return u / (a.size * b.size)


def mean_ratio(id_scores, ood_scores) -> float:
    """OoD/ID mean-score ratio; the ID mean must be positive."""
    a = as_float_array(id_scores, "id scores")
    b = as_float_array(ood_scores, "ood scores")
    if a.size == 0 or b.size == 0:
        raise ValidationError("mean ratio needs nonempty ID and OoD score lists")
    denom = float(a.mean())
    if denom <= 0.0:
        raise ValidationError(f"ID mean must be positive, got {denom!r}")
    return float(b.mean()) / denom


def per_class_ood(id_reports, ood_reports, k: int) -> tuple[float, float]:
    """(mean ratio, AUROC) using the class-k epistemic component as the score."""
    id_scores = [r.c_vector[k] for r in id_reports]
    ood_scores = [r.c_vector[k] for r in ood_reports]
    return mean_ratio(id_scores, ood_scores), auroc(id_scores, ood_scores)


def scores_for_metric(reports: list[UncertaintyReport], metric: str) -> np.ndarray:
    """Per-input OoD score for one of the four headline metrics.

    NegMSP reuses the MaxProb policy score (1 - max_k mu_k): probability
    mass-based confidence with the sign flipped so higher means more OoD,
    matching the other metrics.
    """
    keys = {
        "NegMSP": "MaxProb",
        "MI": "MI",
        "EUvar": "SaleEUGlobal",
        "CSum": None,
    }
    if metric not in keys:
        raise ValidationError(f"unknown OoD metric {metric!r}")
    if metric == "CSum":
        return np.array([r.c_sum for r in reports])
    return np.array([r.policy_scores[keys[metric]] for r in reports])
