"""Numpy implementations of the hot kernels, used when the compiled module is absent."""

import numpy as np


def infonce_rows(logits, partner, valid):
    """Per-row masked InfoNCE and its gradient with respect to the logits.

    ``loss[i] = logsumexp(logits[i, valid[i]]) - logits[i, partner[i]]``.
    Rows whose mask is empty contribute zero loss and zero gradient.
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    rows = np.arange(logits.shape[0])
    has_any = valid.any(axis=1)

    masked = np.where(valid, logits, -np.inf)
    peak = masked.max(axis=1, initial=-np.inf)
    peak = np.where(has_any, peak, 0.0)
    expd = np.where(valid, np.exp(masked - peak[:, None]), 0.0)
    total = expd.sum(axis=1)
    safe_total = np.where(has_any, total, 1.0)
    lse = peak + np.log(safe_total)

    loss = np.where(has_any, lse - logits[rows, partner], 0.0)
    grad = expd / safe_total[:, None]
    grad[rows, partner] -= 1.0
    grad[~has_any] = 0.0
    return loss, grad


def dense_rows(x, weight, bias, relu=False):
    """Row-independent affine map ``x @ weight + bias``.

    Each output row is computed by the same sequence of operations whatever
    the batch it arrives in, so results are bitwise independent of batching.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((x.shape[0], weight.shape[1]))
    for i in range(x.shape[0]):
        row = (weight * x[i][:, None]).sum(axis=0) + bias
        out[i] = np.maximum(row, 0.0) if relu else row
    return out


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.exp(x[i] - x[i].max())
        out[i] = e / e.sum()
    return out
