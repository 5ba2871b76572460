"""Weak and strong stochastic views of feature vectors, and paired batches.

Vector-space stand-ins for the image/text transformation families:

* weak: ``x * (1 + u) + eps`` with a per-vector scale jitter ``u`` and
  per-coordinate Gaussian noise ``eps``;
* strong: the same, with larger noise, followed by zeroing a fixed number
  of randomly chosen coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

WEAK = "weak"
STRONG = "strong"


@dataclass(frozen=True)
class AugmentationSpec:
    family: str
    noise_sigma: float | np.ndarray = 0.0
    scale_jitter: float = 0.0
    mask_fraction: float = 0.0

    def __post_init__(self):
        if self.family not in (WEAK, STRONG):
            raise ConfigError(f"unknown augmentation family {self.family!r}")
        if np.any(np.asarray(self.noise_sigma) < 0) or self.scale_jitter < 0:
            raise ConfigError("noise sigma and scale jitter must be non-negative")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ConfigError("mask fraction must lie in [0, 1]")
        if self.family == WEAK and self.mask_fraction != 0:
            raise ConfigError("the weak family does not mask coordinates")

    def masked_count(self, d):
        # half-up rounding
        return int(np.floor(self.mask_fraction * d + 0.5))


def check_spec_pair(weak: AugmentationSpec, strong: AugmentationSpec):
    """A strong spec must be at least as noisy as its weak counterpart."""
    if weak.family != WEAK or strong.family != STRONG:
        raise ConfigError("expected a (weak, strong) spec pair")
    if np.any(np.asarray(strong.noise_sigma) < np.asarray(weak.noise_sigma)):
        raise ConfigError("strong noise sigma must be >= weak noise sigma")


def augment_rows(x, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply ``spec`` independently to every row of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if d < 1:
        raise ShapeError("augment needs at least one feature")
    u = rng.uniform(-spec.scale_jitter, spec.scale_jitter, size=(n, 1))
    eps = rng.standard_normal((n, d)) * spec.noise_sigma
    out = x * (1.0 + u) + eps
    if spec.family == STRONG:
        k = spec.masked_count(d)
        if k:
            # k distinct coordinates per row: the first k of a random permutation
            cols = np.argsort(rng.random((n, d)), axis=1)[:, :k]
            np.put_along_axis(out, cols, 0.0, axis=1)
    return out


def augment(x, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return augment_rows(x, spec, rng)[0]


@dataclass(frozen=True)
class PairBatch:
    """``views()`` interleaves rows as weak(x_0), strong(x_0), weak(x_1), ..."""

    ids: np.ndarray
    x: np.ndarray
    x_weak: np.ndarray
    x_strong: np.ndarray

    def __len__(self):
        return len(self.ids)

    def views(self):
        out = np.empty((2 * len(self.ids), self.x.shape[1]))
        out[0::2] = self.x_weak
        out[1::2] = self.x_strong
        return out


def make_pair_batch(x, ids, first: AugmentationSpec, second: AugmentationSpec, rng) -> PairBatch:
    x = np.asarray(x, dtype=np.float64)
    ids = np.asarray(ids)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError("a pair batch needs at least one instance")
    if ids.shape != (x.shape[0],):
        raise ShapeError("one id per instance required")
    if len(np.unique(ids)) != len(ids):
        raise ContractError("duplicate instance ids in batch")
    return PairBatch(ids, x, augment_rows(x, first, rng), augment_rows(x, second, rng))
