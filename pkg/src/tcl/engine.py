"""Training, boosting and assignment loops, evaluation reports and ablation sweeps."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import metrics
from .augmentation import STRONG, WEAK, AugmentationSpec, check_spec_pair, make_pair_batch
from .boosting import (
    PseudoLabelStore,
    confidence_from_probs,
    scl_loss,
    select_pseudo_labels,
    sl_loss_from_logits,
    weed_out,
)
from .config import RunConfig
from .data import Checkpoint, Dataset
from .errors import ConfigError, DataError, NumericError, ShapeError
from .losses import total_loss
from .network import NetworkConfig, cluster_probabilities, forward_cluster, forward_features, \
    forward_instance, init_params
from .tensor import Adam, backward, no_grad, take_rows

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ reports

@dataclass
class ClusteringReport:
    stage: str
    train_history: list[dict] = field(default_factory=list)
    boost_history: list[dict] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    cluster_sizes: list[int] = field(default_factory=list)
    pseudo_label_counts: list[int] = field(default_factory=list)
    wall_clock: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_text(self):
        lines = ["# tcl clustering report", f"stage = {self.stage}"]
        for name, value in self.metrics.items():
            lines.append(f"{name} = {value!r}")
        if self.cluster_sizes:
            lines.append("cluster_sizes = " + " ".join(str(s) for s in self.cluster_sizes))
        lines.append(f"train_epochs = {len(self.train_history)}")
        lines.append(f"boost_epochs = {len(self.boost_history)}")
        if self.pseudo_label_counts:
            lines.append(f"pseudo_labels_final = {self.pseudo_label_counts[-1]}")
        for key, value in self.extras.items():
            if not isinstance(value, (dict, list)):
                lines.append(f"{key} = {value}")
        lines.append(f"wall_clock_s = {self.wall_clock:.3f}")
        lines.append(REPORT_JSON_MARKER)
        lines.append(json.dumps(self.to_dict(), sort_keys=True))
        return "\n".join(lines) + "\n"


REPORT_JSON_MARKER = "--- machine-readable ---"


def parse_report(text):
    """Recover report dictionaries from the machine-readable block(s) of a report file."""
    out = []
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == REPORT_JSON_MARKER and i + 1 < len(lines):
            out.append(json.loads(lines[i + 1]))
    return out


# -------------------------------------------------------------- set-up

def network_config(config: RunConfig, input_dim: int) -> NetworkConfig:
    return NetworkConfig(
        input_dim=input_dim,
        hidden_sizes=config.hidden_sizes,
        feature_dim=config.feature_dim,
        ich_dim=config.ich_dim,
        clusters=config.head_clusters,
        seed=config.seed,
    )


def augmentation_specs(config: RunConfig, dataset: Dataset):
    """The two view families for ``config.augmentation``, noise scaled by per-feature std."""
    std = dataset.feature_std
    weak = AugmentationSpec(WEAK, config.weak_noise * std, config.scale_jitter, 0.0)
    strong = AugmentationSpec(STRONG, config.strong_noise * std, config.scale_jitter, config.mask_fraction)
    check_spec_pair(weak, strong)
    return {
        "weak-strong": (weak, strong),
        "weak-weak": (weak, weak),
        "strong-strong": (strong, strong),
    }[config.augmentation]


def initial_checkpoint(config: RunConfig, input_dim: int) -> Checkpoint:
    net = network_config(config, input_dim)
    params = init_params(net)
    rng = np.random.default_rng([config.seed, 1])
    return Checkpoint(
        network=net,
        params={k: v.copy() for k, v in params.arrays().items()},
        store=PseudoLabelStore(gamma=config.gamma, alpha=config.alpha),
        rng_state=rng.bit_generator.state,
        run_config=config.to_dict(),
    )


def _check_dims(ckpt: Checkpoint, dataset: Dataset):
    if dataset.d != ckpt.network.input_dim:
        raise ShapeError(f"data has {dataset.d} features, model expects {ckpt.network.input_dim}")


class _Session:
    """Mutable model/optimizer/rng triple restored from, and written back to, a checkpoint."""

    def __init__(self, ckpt: Checkpoint, config: RunConfig):
        self.ckpt = ckpt
        self.model = ckpt.model()
        self.opt = Adam(self.model.tensors, lr=config.lr, weight_decay=config.weight_decay)
        if ckpt.adam is not None:
            self.opt.load_state_dict(ckpt.adam)
            self.opt.lr, self.opt.weight_decay = config.lr, config.weight_decay
        self.rng = np.random.default_rng()
        self.rng.bit_generator.state = ckpt.rng_state

    def batches(self, n, size):
        order = self.rng.permutation(n)
        for start in range(0, n, size):
            idx = order[start:start + size]
            if len(idx) >= 2:
                yield idx

    def step(self, loss, where):
        if not np.isfinite(loss.values).all():
            raise NumericError(f"non-finite loss at {where}")
        self.opt.zero_grad()
        try:
            backward(loss)
            self.opt.step()
        except NumericError as exc:
            raise NumericError(f"{exc} at {where}") from None

    def to_checkpoint(self, **changes):
        ckpt = self.ckpt
        return Checkpoint(
            network=ckpt.network,
            params={k: v.copy() for k, v in self.model.arrays().items()},
            adam=self.opt.state_dict(),
            store=changes.pop("store", ckpt.store),
            rng_state=self.rng.bit_generator.state,
            epochs_trained=changes.pop("epochs_trained", ckpt.epochs_trained),
            epochs_boosted=changes.pop("epochs_boosted", ckpt.epochs_boosted),
            run_config=changes.pop("run_config", ckpt.run_config),
        )


def _representations(model, views, heads):
    h = forward_features(model, views)
    y, logits = forward_cluster(model, h)
    z = forward_instance(model, h) if heads == "decoupled" else y
    return z, y, logits


def _mean_records(records):
    if not records:
        return {}
    return {k: float(np.mean([r[k] for r in records])) for k in records[0]}


# ---------------------------------------------------------------- training

def run_training(config: RunConfig, dataset: Dataset, checkpoint: Checkpoint | None = None):
    """Optimize the twin contrastive objective for ``config.epochs_train`` epochs."""
    started = time.perf_counter()
    ckpt = checkpoint or initial_checkpoint(config, dataset.d)
    _check_dims(ckpt, dataset)
    first, second = augmentation_specs(config, dataset)
    session = _Session(ckpt, config)
    history = []

    for epoch in range(config.epochs_train):
        records = []
        for b, idx in enumerate(session.batches(dataset.n, config.batch_size)):
            batch = make_pair_batch(dataset.x[idx], dataset.ids[idx], first, second, session.rng)
            where = f"train epoch {ckpt.epochs_trained + epoch + 1}, batch {b + 1}"
            try:
                z, y, _ = _representations(session.model, batch.views(), config.heads)
                loss, parts = total_loss(z, y, config.tau_instance, config.tau_cluster)
            except NumericError as exc:
                raise NumericError(f"{exc} at {where}") from None
            session.step(loss, where)
            records.append({"l_ins": parts.l_ins, "l_clu": parts.l_clu, "h_clu": parts.h_clu,
                            "l_total": parts.l_total})
        history.append(_mean_records(records))
        log.debug("train epoch %d: %s", epoch + 1, history[-1])

    out = session.to_checkpoint(epochs_trained=ckpt.epochs_trained + config.epochs_train,
                                run_config=config.to_dict())
    report = _finish_report("train", out, dataset, started)
    report.train_history = history
    return out, report


# ---------------------------------------------------------------- boosting

def _refresh_pseudo_labels(model, x, ids, store, m):
    with no_grad():
        conf, pred = confidence_from_probs(forward_cluster(model, forward_features(model, x))[0].values)
    weed_out(conf, ids, store)
    select_pseudo_labels(conf, pred, ids, store, m)


def run_boosting(config: RunConfig, checkpoint: Checkpoint, dataset: Dataset):
    """Fine-tune with pseudo labels: SCL on the instance head plus SL on the cluster head."""
    started = time.perf_counter()
    _check_dims(checkpoint, dataset)
    first, second = augmentation_specs(config, dataset)
    session = _Session(checkpoint, config)
    old = checkpoint.store
    store = PseudoLabelStore(gamma=config.gamma, alpha=config.alpha, entries=dict(old.entries))
    m = checkpoint.network.clusters
    history, counts = [], []

    for epoch in range(config.epochs_boost):
        records = []
        if config.selection_batch_size:
            for idx in session.batches(dataset.n, config.selection_batch_size):
                _refresh_pseudo_labels(session.model, dataset.x[idx], dataset.ids[idx], store, m)
        for b, idx in enumerate(session.batches(dataset.n, config.batch_size)):
            x, ids = dataset.x[idx], dataset.ids[idx]
            where = f"boost epoch {checkpoint.epochs_boosted + epoch + 1}, batch {b + 1}"
            if not config.selection_batch_size:
                _refresh_pseudo_labels(session.model, x, ids, store, m)
            counts.append(len(store))
            labels = store.labels_for(ids)
            batch = make_pair_batch(x, ids, first, second, session.rng)
            try:
                z, _, logits = _representations(session.model, batch.views(), config.heads)
                strong_logits = take_rows(logits, np.arange(1, 2 * len(idx), 2))
                sl, n_labeled = sl_loss_from_logits(strong_logits, labels)
                if config.boost_components == "sl+scl":
                    scl = scl_loss(z, labels, m, config.tau_instance)
                    loss = scl + sl
                else:
                    scl = None
                    loss = sl
            except NumericError as exc:
                raise NumericError(f"{exc} at {where}") from None
            if loss.requires_grad:
                session.step(loss, where)
            records.append({"l_scl": scl.item() if scl is not None else 0.0, "l_sl": sl.item(),
                            "l_boost": loss.item(), "n_labeled": float(n_labeled)})
        history.append(_mean_records(records))
        log.debug("boost epoch %d: %s (store %d)", epoch + 1, history[-1], len(store))

    out = session.to_checkpoint(store=store, epochs_boosted=checkpoint.epochs_boosted + config.epochs_boost)
    report = _finish_report("boost", out, dataset, started)
    report.boost_history = history
    report.pseudo_label_counts = counts
    return out, report


# -------------------------------------------------------------- assignment

def assign(checkpoint: Checkpoint, x):
    """Cluster label and confidence for each row of ``x`` (a single vector is one row).

    Every row is processed independently, so the result for an instance does not
    depend on what else is in the call.
    """
    model = checkpoint.model() if isinstance(checkpoint, Checkpoint) else checkpoint
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ShapeError(f"expected {model.config.input_dim} features per instance, got shape {x.shape}")
    probs = cluster_probabilities(model, x)
    conf, pred = confidence_from_probs(probs)
    return pred.astype(np.int64), conf


def assign_stream(checkpoint: Checkpoint, instances: Iterable[tuple[int, np.ndarray]]) -> Iterator[tuple[int, int, float]]:
    """Assign instances one at a time as they arrive: yields ``(id, cluster, confidence)``."""
    model = checkpoint.model() if isinstance(checkpoint, Checkpoint) else checkpoint
    for ident, row in instances:
        label, conf = assign(model, row)
        yield ident, int(label[0]), float(conf[0])


def evaluate(checkpoint: Checkpoint, dataset: Dataset) -> ClusteringReport:
    if dataset.labels is None:
        raise DataError("evaluation needs ground-truth labels")
    started = time.perf_counter()
    report = ClusteringReport(stage="eval")
    _fill_metrics(report, checkpoint, dataset)
    report.wall_clock = time.perf_counter() - started
    return report


def _fill_metrics(report, checkpoint, dataset):
    pred, _ = assign(checkpoint, dataset.x)
    m = checkpoint.network.clusters
    report.cluster_sizes = np.bincount(pred, minlength=m).tolist()
    if dataset.labels is None:
        return
    truth = dataset.labels
    report.metrics = {
        "nmi": metrics.nmi(pred, truth),
        "acc": metrics.clustering_accuracy(pred, truth),
        "ari": metrics.ari(pred, truth),
    }
    if m > dataset.num_classes:
        report.metrics["majority_acc"] = metrics.majority_vote_accuracy(pred, truth)


def _finish_report(stage, ckpt, dataset, started):
    report = ClusteringReport(stage=stage)
    _fill_metrics(report, ckpt, dataset)
    report.wall_clock = time.perf_counter() - started
    return report


# ----------------------------------------------------------------- ablation

ABLATIONS = {
    "augmentation": [("T+T", {"augmentation": "weak-weak"}),
                     ("T+T'", {"augmentation": "weak-strong"}),
                     ("T'+T'", {"augmentation": "strong-strong"})],
    "decoupling": [("decoupled", {"heads": "decoupled"}),
                   ("shared", {"heads": "shared"})],
    "overcluster": [("standard", {"overcluster_factor": 1}),
                    ("overcluster-2", {"overcluster_factor": 2})],
    "boosting": [("none", {}), ("SL", {"boost_components": "sl"}), ("SL+SCL", {"boost_components": "sl+scl"})],
}


def run_ablation(config: RunConfig, dataset: Dataset, mode: str) -> dict[str, ClusteringReport]:
    """Train one variant per ablation setting and return the reports keyed by variant name."""
    if mode not in ABLATIONS:
        raise ConfigError(f"unknown ablation mode {mode!r}")
    reports = {}
    if mode == "boosting":
        trained, base = run_training(config, dataset)
        for name, changes in ABLATIONS[mode]:
            if not changes:
                reports[name] = base
                continue
            _, rep = run_boosting(config.replace(**changes), trained, dataset)
            reports[name] = rep
    else:
        for name, changes in ABLATIONS[mode]:
            _, rep = run_training(config.replace(**changes), dataset)
            reports[name] = rep
    for name, rep in reports.items():
        rep.extras["variant"] = name
        if "majority_acc" in rep.metrics:
            rep.extras["majority_dominates"] = bool(rep.metrics["majority_acc"] >= rep.metrics["acc"])
    return reports
