"""Clustering agreement metrics: NMI, Hungarian-matched accuracy, ARI, majority-vote accuracy."""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError


def _labels(pred, true):
    pred = np.asarray(pred).ravel()
    true = np.asarray(true).ravel()
    if pred.shape != true.shape:
        raise ShapeError(f"label vectors differ in length: {len(pred)} vs {len(true)}")
    if len(pred) == 0:
        raise ShapeError("metrics need at least one sample")
    return pred, true


def contingency(pred, true):
    """Counts matrix ``[n_pred_clusters, n_true_classes]`` over the observed label values."""
    pred, true = _labels(pred, true)
    _, p_idx = np.unique(pred, return_inverse=True)
    _, t_idx = np.unique(true, return_inverse=True)
    table = np.zeros((p_idx.max() + 1, t_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (p_idx, t_idx), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, true):
    """Mutual information normalized by the geometric mean of the two entropies."""
    table = contingency(pred, true)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_true = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0  # 0/0 taken as 0
    nz = table > 0
    pij = table[nz] / n
    pi = (table.sum(axis=1, keepdims=True) / n).repeat(table.shape[1], axis=1)[nz]
    pj = (table.sum(axis=0, keepdims=True) / n).repeat(table.shape[0], axis=0)[nz]
    mi = float((pij * np.log(pij / (pi * pj))).sum())
    return float(max(0.0, min(1.0, mi / np.sqrt(h_pred * h_true))))


def clustering_accuracy(pred, true):
    """Best one-to-one cluster->class matching, as a fraction of samples."""
    table = contingency(pred, true)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum() / table.sum())


def _pairs(k):
    return k * (k - 1) / 2.0


def ari(pred, true):
    table = contingency(pred, true)
    n = table.sum()
    sum_ij = _pairs(table).sum()
    sum_a = _pairs(table.sum(axis=1)).sum()
    sum_b = _pairs(table.sum(axis=0)).sum()
    total = _pairs(n)
    expected = sum_a * sum_b / total if total else 0.0
    ceiling = 0.5 * (sum_a + sum_b)
    if ceiling == expected:
        # both partitions trivial in the same way (e.g. n == 1 or identical all-singletons)
        return 1.0 if sum_ij == ceiling else 0.0
    return float((sum_ij - expected) / (ceiling - expected))


def majority_mapping(pred, true):
    """Map every predicted cluster to its most frequent true class (lowest class on ties)."""
    pred, true = _labels(pred, true)
    mapping = {}
    for cluster in np.unique(pred):
        classes, counts = np.unique(true[pred == cluster], return_counts=True)
        mapping[cluster.item()] = classes[np.argmax(counts)].item()
    return mapping


def majority_vote_accuracy(pred, true):
    pred, true = _labels(pred, true)
    mapping = majority_mapping(pred, true)
    mapped = np.array([mapping[p] for p in pred.tolist()])
    return float((mapped == true).mean())
