"""Instance-level and cluster-level contrastive losses and the twin objective.

Row convention for ``2R``-row inputs: rows ``2i`` and ``2i + 1`` (zero-based)
are the two views of item ``i`` and form the positive pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor, as_tensor, col_mean, entropy, infonce, interleave_rows, l2_normalize_rows, \
    matmul, scale, take_rows, transpose

TAU_INSTANCE = 0.5
TAU_CLUSTER = 1.0


def _check_tau(tau):
    if not tau > 0:
        raise ConfigError(f"temperature must be positive, got {tau}")


def partner_index(rows):
    return np.arange(rows) ^ 1


def pairwise_cosine(z) -> Tensor:
    z = as_tensor(z)
    zn = l2_normalize_rows(z)
    return matmul(zn, transpose(zn))


def _paired_infonce(reps, tau, valid):
    rows = reps.shape[0]
    if rows < 2 or rows % 2:
        raise ShapeError(f"need an even number (>= 2) of rows, got {rows}")
    logits = scale(pairwise_cosine(reps), 1.0 / tau)
    return infonce(logits, partner_index(rows), valid)


def instance_loss(z, tau=TAU_INSTANCE) -> Tensor:
    """InfoNCE over the ``2N`` view embeddings; each row's denominator excludes itself."""
    _check_tau(tau)
    z = as_tensor(z)
    rows = z.shape[0]
    return _paired_infonce(z, tau, ~np.eye(rows, dtype=bool))


def split_views(y):
    """Split an interleaved ``2N``-row tensor into its (first-view, second-view) halves."""
    rows = y.shape[0]
    return take_rows(y, np.arange(0, rows, 2)), take_rows(y, np.arange(1, rows, 2))


def check_probability_rows(y, tol=1e-6):
    vals = y.values if isinstance(y, Tensor) else np.asarray(y)
    if (vals < -tol).any() or not np.allclose(vals.sum(axis=1), 1.0, rtol=0, atol=tol):
        raise ContractError("rows must be probability vectors")


def cluster_entropy(y_first, y_second) -> Tensor:
    """Entropy of the batch-level cluster assignment distributions of both views."""
    y_first, y_second = as_tensor(y_first), as_tensor(y_second)
    check_probability_rows(y_first)
    check_probability_rows(y_second)
    return entropy(col_mean(y_first)) + entropy(col_mean(y_second))


def cluster_contrast(y_first, y_second, tau=TAU_CLUSTER) -> Tensor:
    """InfoNCE between the 2M cluster columns, without the entropy term."""
    _check_tau(tau)
    y_first, y_second = as_tensor(y_first), as_tensor(y_second)
    if y_first.shape != y_second.shape:
        raise ShapeError("both views need the same assignment shape")
    m = y_first.shape[1]
    if m < 2:
        raise ConfigError("cluster-level contrast needs at least two clusters")
    columns = interleave_rows(transpose(y_first), transpose(y_second))
    return _paired_infonce(columns, tau, ~np.eye(2 * m, dtype=bool))


def cluster_loss(y_first, y_second, tau=TAU_CLUSTER) -> Tensor:
    return cluster_contrast(y_first, y_second, tau) - cluster_entropy(y_first, y_second)


@dataclass
class TwinLossBreakdown:
    l_ins: float
    l_clu: float
    h_clu: float
    l_total: float
    tau_instance: float
    tau_cluster: float


def total_loss(z, y, tau_instance=TAU_INSTANCE, tau_cluster=TAU_CLUSTER):
    """Twin objective on interleaved ICH outputs ``z`` and CCH probabilities ``y``.

    Returns ``(loss_tensor, breakdown)``.
    """
    l_ins = instance_loss(z, tau_instance)
    y_first, y_second = split_views(as_tensor(y))
    h = cluster_entropy(y_first, y_second)
    l_clu = cluster_contrast(y_first, y_second, tau_cluster) - h
    loss = l_ins + l_clu
    breakdown = TwinLossBreakdown(
        l_ins=l_ins.item(),
        l_clu=l_clu.item(),
        h_clu=h.item(),
        l_total=loss.item(),
        tau_instance=tau_instance,
        tau_cluster=tau_cluster,
    )
    return loss, breakdown
