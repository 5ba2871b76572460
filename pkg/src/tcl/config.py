"""Run configuration and its flat ``key = value`` file format.

Blank lines and ``#`` comments are ignored. Unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

AUGMENTATION_MODES = ("weak-strong", "weak-weak", "strong-strong")
HEAD_MODES = ("decoupled", "shared")
BOOST_COMPONENTS = ("sl+scl", "sl")

# image-scale reference values; the default lr is raised for short desk-scale runs
REFERENCE_LR = 1e-4
DEFAULT_BATCH_SIZE = 256


@dataclass
class RunConfig:
    clusters: int = 10
    hidden_sizes: tuple[int, ...] = (256, 128)
    feature_dim: int = 64
    ich_dim: int = 128
    seed: int = 0

    weak_noise: float = 0.05
    strong_noise: float = 0.10
    scale_jitter: float = 0.1
    mask_fraction: float = 0.25

    tau_instance: float = 0.5
    tau_cluster: float = 1.0
    gamma: float = 0.5
    alpha: float = 0.99

    batch_size: int = DEFAULT_BATCH_SIZE
    epochs_train: int = 200
    epochs_boost: int = 50
    lr: float = 1e-3
    weight_decay: float = 1e-4

    augmentation: str = "weak-strong"
    heads: str = "decoupled"
    overcluster_factor: int = 1
    boost_components: str = "sl+scl"
    selection_batch_size: int = 0

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    def validate(self):
        checks = [
            (self.clusters >= 2, "clusters must be >= 2"),
            (self.batch_size >= 2, "batch_size must be >= 2"),
            (self.epochs_train >= 0, "epochs_train must be >= 0"),
            (self.epochs_boost >= 0, "epochs_boost must be >= 0"),
            (self.overcluster_factor >= 1, "overcluster_factor must be >= 1"),
            (self.tau_instance > 0 and self.tau_cluster > 0, "temperatures must be positive"),
            (0 < self.gamma <= 1, "gamma must lie in (0, 1]"),
            (0 <= self.alpha <= 1, "alpha must lie in [0, 1]"),
            (self.lr > 0, "lr must be positive"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.weak_noise >= 0 and self.strong_noise >= self.weak_noise,
             "need 0 <= weak_noise <= strong_noise"),
            (self.scale_jitter >= 0, "scale_jitter must be >= 0"),
            (0 <= self.mask_fraction <= 1, "mask_fraction must lie in [0, 1]"),
            (self.augmentation in AUGMENTATION_MODES, f"augmentation must be one of {AUGMENTATION_MODES}"),
            (self.heads in HEAD_MODES, f"heads must be one of {HEAD_MODES}"),
            (self.boost_components in BOOST_COMPONENTS, f"boost_components must be one of {BOOST_COMPONENTS}"),
            (self.selection_batch_size >= 0, "selection_batch_size must be >= 0"),
            (self.feature_dim >= 1 and self.ich_dim >= 1 and all(h >= 1 for h in self.hidden_sizes),
             "layer widths must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def head_clusters(self):
        """Width of the cluster head: target clusters times the over-clustering factor."""
        return self.clusters * self.overcluster_factor

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(name, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "tuple":
            return tuple(int(p) for p in raw.replace(" ", "").split(",") if p)
        return raw
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r}") from None


def _field_kinds():
    kinds = {}
    for f in dataclasses.fields(RunConfig):
        default = f.default
        if isinstance(default, tuple):
            kinds[f.name] = "tuple"
        else:
            kinds[f.name] = type(default)
    return kinds


def parse_config(text) -> RunConfig:
    kinds = _field_kinds()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in kinds:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, kinds[key])
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
