"""Shared MLP backbone with the instance head (ICH) and the cluster head (CCH)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .tensor import Tensor, add, matmul, relu, softmax_rows


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_sizes: tuple[int, ...] = (256, 128)
    feature_dim: int = 64
    ich_dim: int = 128
    clusters: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        dims = (self.input_dim, self.feature_dim, self.ich_dim, *self.hidden_sizes)
        if any(d < 1 for d in dims):
            raise ConfigError(f"all network dimensions must be >= 1, got {dims}")
        if self.clusters < 2:
            raise ConfigError("cluster count must be >= 2")

    def to_dict(self):
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "hidden_sizes": tuple(d["hidden_sizes"])})

    def layer_shapes(self):
        """Ordered ``name -> (fan_in, fan_out)`` for every affine layer."""
        shapes = {}
        widths = [self.input_dim, *self.hidden_sizes, self.feature_dim]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            shapes[f"backbone.{i}"] = (a, b)
        shapes["ich.0"] = (self.feature_dim, self.feature_dim)
        shapes["ich.1"] = (self.feature_dim, self.ich_dim)
        shapes["cch.0"] = (self.feature_dim, self.feature_dim)
        shapes["cch.1"] = (self.feature_dim, self.clusters)
        return shapes


@dataclass
class ModelParams:
    config: NetworkConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def arrays(self):
        return {k: t.values for k, t in self.tensors.items()}

    def backbone_layers(self):
        return sum(1 for k in self.tensors if k.startswith("backbone.") and k.endswith(".weight"))


def init_params(config: NetworkConfig) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, seeded."""
    rng = np.random.default_rng(config.seed)
    tensors = {}
    for name, (fan_in, fan_out) in config.layer_shapes().items():
        bound = 1.0 / np.sqrt(fan_in)
        tensors[f"{name}.weight"] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
        tensors[f"{name}.bias"] = Tensor(rng.uniform(-bound, bound, (1, fan_out)), requires_grad=True)
    return ModelParams(config, tensors)


def params_from_arrays(config: NetworkConfig, arrays) -> ModelParams:
    shapes = config.layer_shapes()
    tensors = {}
    for name, (fan_in, fan_out) in shapes.items():
        for suffix, shape in (("weight", (fan_in, fan_out)), ("bias", (1, fan_out))):
            key = f"{name}.{suffix}"
            if key not in arrays:
                raise ShapeError(f"missing parameter {key}")
            arr = np.asarray(arrays[key], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"parameter {key} has shape {arr.shape}, config expects {shape}")
            tensors[key] = Tensor(arr, requires_grad=True)
    return ModelParams(config, tensors)


def _affine(params, name, x):
    return add(matmul(x, params[f"{name}.weight"]), params[f"{name}.bias"])


def _as_input(x, width):
    if not isinstance(x, Tensor):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != width:
            raise ShapeError(f"expected input with {width} columns, got shape {x.shape}")
        x = Tensor(x)
    elif x.shape[1] != width:
        raise ShapeError(f"expected input with {width} columns, got shape {x.shape}")
    return x


def forward_features(params: ModelParams, x) -> Tensor:
    x = _as_input(x, params.config.input_dim)
    n_layers = params.backbone_layers()
    h = x
    for i in range(n_layers):
        h = _affine(params, f"backbone.{i}", h)
        if i < n_layers - 1:
            h = relu(h)
    return h


def forward_instance(params: ModelParams, h: Tensor) -> Tensor:
    h = _as_input(h, params.config.feature_dim)
    return _affine(params, "ich.1", relu(_affine(params, "ich.0", h)))


def forward_cluster(params: ModelParams, h: Tensor) -> tuple[Tensor, Tensor]:
    """Return ``(y, logits)`` where ``y`` holds row-wise softmax probabilities."""
    h = _as_input(h, params.config.feature_dim)
    logits = _affine(params, "cch.1", relu(_affine(params, "cch.0", h)))
    return softmax_rows(logits), logits


def cluster_probabilities(params: ModelParams, x) -> np.ndarray:
    """CCH probabilities computed row by row through the compiled kernels.

    Unlike :func:`forward_cluster`, each row's result is bitwise independent
    of which other rows share the call, which is what online assignment needs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ShapeError(f"expected input with {params.config.input_dim} columns, got shape {x.shape}")
    a = params.arrays()
    n_layers = params.backbone_layers()
    h = x
    for i in range(n_layers):
        h = kernels.dense_rows(h, a[f"backbone.{i}.weight"], a[f"backbone.{i}.bias"], relu=i < n_layers - 1)
    c = kernels.dense_rows(h, a["cch.0.weight"], a["cch.0.bias"], relu=True)
    logits = kernels.dense_rows(c, a["cch.1.weight"], a["cch.1.bias"])
    if logits.shape[0] == 0:
        return logits
    return kernels.softmax_rows(logits)
