"""Confidence-based boosting: pseudo-label memory, selection, weed-out and the two boosting losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .losses import TAU_INSTANCE, _check_tau, _paired_infonce
from .network import forward_cluster, forward_features
from .tensor import Tensor, as_tensor, softmax_cross_entropy, take_rows

GAMMA = 0.5
ALPHA = 0.99


@dataclass
class PseudoLabelStore:
    """Memory of pseudo labels: ``instance id -> (label, confidence)``."""

    gamma: float = GAMMA
    alpha: float = ALPHA
    entries: dict[int, tuple[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return int(key) in self.entries

    def label(self, key, default=None):
        entry = self.entries.get(int(key))
        return default if entry is None else entry[0]

    def labels_for(self, ids):
        """Stored labels for ``ids``, ``-1`` where absent."""
        return np.array([self.label(i, -1) for i in ids], dtype=np.int64)


def predict_confidence(params, x):
    """Confidence (max probability) and prediction (argmax, lowest index on ties) per row."""
    y, _ = forward_cluster(params, forward_features(params, x))
    return confidence_from_probs(y.values)


def confidence_from_probs(y):
    y = np.asarray(y)
    pred = y.argmax(axis=1)  # first maximum wins
    return y[np.arange(len(y)), pred], pred


def per_cluster_quota(n, m, gamma):
    return max(1, int(np.floor(gamma * n / m)))


def select_pseudo_labels(conf, pred, ids, store: PseudoLabelStore, m):
    """Write the top-confidence fraction of each predicted cluster into ``store``.

    Within the batch, the threshold for cluster ``k`` is the ``min(n, count_k)``-th
    largest confidence among rows predicted as ``k``, with
    ``n = max(1, floor(gamma * N / M))``. Rows at or above their cluster's
    threshold overwrite any earlier entry. Returns the selected ids.
    """
    conf = np.asarray(conf, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.int64)
    ids = np.asarray(ids)
    if not conf.shape == pred.shape == ids.shape:
        raise ShapeError("conf, pred and ids must align")
    if len(ids) == 0:
        return []
    quota = per_cluster_quota(len(ids), m, store.gamma)
    chosen = []
    for k in np.unique(pred):
        members = np.flatnonzero(pred == k)
        ranked = np.sort(conf[members])[::-1]
        threshold = ranked[min(quota, len(ranked)) - 1]
        chosen.extend(members[conf[members] >= threshold])
    chosen.sort()
    for i in chosen:
        store.entries[int(ids[i])] = (int(pred[i]), float(conf[i]))
    return [int(ids[i]) for i in chosen]


def weed_out(conf, ids, store: PseudoLabelStore):
    """Drop stored entries for ``ids`` whose recomputed confidence fell below alpha."""
    removed = []
    for c, key in zip(np.asarray(conf, dtype=np.float64), ids):
        key = int(key)
        if key in store.entries:
            if c < store.alpha:
                del store.entries[key]
                removed.append(key)
            else:
                label, _ = store.entries[key]
                store.entries[key] = (label, float(c))
    return removed


def view_labels(instance_labels, m):
    """Expand per-instance pseudo labels to the interleaved 2N views.

    Unlabeled instances (``-1``) receive a label unique to the instance, so
    they keep every other sample as a negative.
    """
    instance_labels = np.asarray(instance_labels, dtype=np.int64)
    sentinel = m + np.arange(len(instance_labels))
    labels = np.where(instance_labels >= 0, instance_labels, sentinel)
    return np.repeat(labels, 2)


def scl_loss(z, instance_labels, m, tau=TAU_INSTANCE) -> Tensor:
    """Instance contrast with same-pseudo-class samples dropped from the denominator.

    Both views of a pseudo-labeled instance share its label, so the positive
    partner leaves the denominator too; rows whose denominator is empty
    contribute zero.
    """
    _check_tau(tau)
    z = as_tensor(z)
    labels = view_labels(instance_labels, m)
    if len(labels) != z.shape[0]:
        raise ShapeError("one label per instance (two views each) required")
    valid = labels[:, None] != labels[None, :]
    return _paired_infonce(z, tau, valid)


def class_balance_weights(labels):
    """``w_c = N_p / (C * N_c)`` over the ``C`` clusters present, so weights average to one."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return np.zeros(0)
    present, counts = np.unique(labels, return_counts=True)
    per_class = len(labels) / (len(present) * counts)
    lookup = dict(zip(present.tolist(), per_class.tolist()))
    return np.array([lookup[c] for c in labels.tolist()])


def sl_loss_from_logits(logits, instance_labels):
    """Class-balanced cross-entropy on the labeled rows of ``logits``.

    Returns ``(loss, n_labeled)``. With no pseudo labels in the batch the loss
    is a constant zero and ``n_labeled == 0``.
    """
    instance_labels = np.asarray(instance_labels, dtype=np.int64)
    labeled = np.flatnonzero(instance_labels >= 0)
    if len(labeled) == 0:
        return Tensor(0.0), 0
    rows = take_rows(as_tensor(logits), labeled)
    targets = instance_labels[labeled]
    weights = class_balance_weights(targets)
    return softmax_cross_entropy(rows, targets, weights, normalizer=len(labeled)), len(labeled)


def sl_loss(params, x_strong, instance_labels):
    """Self-labeling loss on strongly augmented inputs (see :func:`sl_loss_from_logits`)."""
    _, logits = forward_cluster(params, forward_features(params, x_strong))
    return sl_loss_from_logits(logits, instance_labels)


def boost_loss(scl, sl):
    return scl + sl
