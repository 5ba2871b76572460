"""Datasets, synthetic blobs, vector file formats, checkpoints and instance streams."""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .boosting import PseudoLabelStore
from .errors import CheckpointError, ConfigError, DataError, ShapeError
from .network import NetworkConfig, params_from_arrays

CHECKPOINT_MAGIC = "TCL-CHECKPOINT"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    x: np.ndarray
    labels: np.ndarray | None = None
    ids: np.ndarray | None = None
    feature_std: np.ndarray = field(init=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ShapeError("dataset features must be a 2-D matrix")
        n = len(self.x)
        self.ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if self.ids.shape != (n,):
            raise ShapeError("one id per row required")
        if len(np.unique(self.ids)) != n:
            raise DataError("dataset ids must be unique")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ShapeError("one label per row required")
            if (self.labels < 0).any():
                raise DataError("labels must be non-negative integers")
        self.feature_std = self.x.std(axis=0) if n else np.zeros(self.x.shape[1])

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def num_classes(self):
        return 0 if self.labels is None else int(self.labels.max()) + 1


# ---------------------------------------------------------------- synthetic

def generate_blobs(k, n, d, separation, seed=0, max_tries=100) -> Dataset:
    """``k`` unit-variance Gaussian clusters whose centers are at least ``separation`` apart.

    Centers are drawn from a standard normal and rescaled so the closest pair
    sits exactly at ``separation``. Cluster sizes differ by at most one and
    rows come out in a shuffled order.
    """
    if k < 2 or n < k or d < 2 or not separation > 0:
        raise ConfigError("generate_blobs needs k >= 2, n >= k, d >= 2, separation > 0")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        centers = rng.standard_normal((k, d))
        gaps = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        closest = gaps[np.triu_indices(k, 1)].min()
        if closest > 1e-6:
            centers *= separation / closest
            break
    else:
        raise DataError(f"could not place {k} distinct centers in {max_tries} tries")
    labels = np.arange(n) % k
    labels = labels[rng.permutation(n)]
    x = centers[labels] + rng.standard_normal((n, d))
    return Dataset(x, labels)


# --------------------------------------------------------------- file I/O

def _to_float(cell, lineno):
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise DataError(f"line {lineno}: non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: non-finite value {cell!r}")
    return value


def _to_int(cell, lineno, what):
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise DataError(f"line {lineno}: {what} {cell!r} is not an integer") from None
    if not value.is_integer():
        raise DataError(f"line {lineno}: {what} {cell!r} is not an integer")
    return int(value)


class _Collector:
    def __init__(self):
        self.rows, self.labels, self.ids = [], [], []
        self.seen = set()
        self.width = None

    def add(self, lineno, x, label, ident):
        if self.width is None:
            self.width = len(x)
            if self.width == 0:
                raise DataError(f"line {lineno}: no feature values")
        elif len(x) != self.width:
            raise DataError(f"line {lineno}: expected {self.width} features, got {len(x)}")
        if ident is not None:
            if ident in self.seen:
                raise DataError(f"line {lineno}: duplicate id {ident}")
            self.seen.add(ident)
        self.rows.append(x)
        self.labels.append(label)
        self.ids.append(ident)

    def build(self):
        if not self.rows:
            raise DataError("no rows")
        has_ids = [i is not None for i in self.ids]
        if any(has_ids) and not all(has_ids):
            raise DataError("either every row has an id or none does")
        has_labels = [lab is not None for lab in self.labels]
        if any(has_labels) and not all(has_labels):
            raise DataError("either every row has a label or none does")
        return Dataset(
            np.array(self.rows, dtype=np.float64),
            np.array(self.labels) if all(has_labels) else None,
            np.array(self.ids) if all(has_ids) else None,
        )


def _parse_csv(text):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("no rows") from None
    header = [h.strip() for h in header]
    label_col = header.index("label") if "label" in header else None
    id_col = header.index("id") if "id" in header else None
    feature_cols = [i for i, h in enumerate(header) if i not in (label_col, id_col)]
    out = _Collector()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        x = [_to_float(row[i], lineno) for i in feature_cols]
        label = _to_int(row[label_col], lineno, "label") if label_col is not None else None
        ident = _to_int(row[id_col], lineno, "id") if id_col is not None else None
        out.add(lineno, x, label, ident)
    return out.build()


def parse_jsonl_record(line, lineno):
    """Decode one ``{"x": [...], "label"?: int, "id"?: int}`` record."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict) or not isinstance(record.get("x"), list):
        raise DataError(f"line {lineno}: record needs an 'x' array")
    x = [_to_float(v, lineno) for v in record["x"]]
    label = _to_int(record["label"], lineno, "label") if record.get("label") is not None else None
    ident = _to_int(record["id"], lineno, "id") if record.get("id") is not None else None
    return x, label, ident


def _parse_jsonl(text):
    out = _Collector()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        out.add(lineno, *parse_jsonl_record(line, lineno))
    return out.build()


def _detect_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "jsonl"):
            raise ConfigError(f"unsupported vector format {fmt!r}")
        return fmt
    return "jsonl" if Path(path).suffix.lower() in (".jsonl", ".json", ".ndjson") else "csv"


def load_vectors(path, fmt=None) -> Dataset:
    """Read a CSV (header row; optional ``label``/``id`` columns) or JSONL vector file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    fmt = _detect_format(path, fmt)
    return _parse_jsonl(text) if fmt == "jsonl" else _parse_csv(text)


def save_vectors(dataset: Dataset, path, fmt=None):
    path = Path(path)
    fmt = _detect_format(path, fmt)
    buf = io.StringIO()
    if fmt == "jsonl":
        for i in range(dataset.n):
            rec = {"id": int(dataset.ids[i]), "x": dataset.x[i].tolist()}
            if dataset.labels is not None:
                rec["label"] = int(dataset.labels[i])
            buf.write(json.dumps(rec) + "\n")
    else:
        writer = csv.writer(buf, lineterminator="\n")
        header = [f"f{j}" for j in range(dataset.d)] + ["id"]
        if dataset.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]] + [int(dataset.ids[i])]
            if dataset.labels is not None:
                row.append(int(dataset.labels[i]))
            writer.writerow(row)
    path.write_text(buf.getvalue())


def stream_source(dataset: Dataset, seed=0) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(id, row)`` one instance at a time in a seeded random order."""
    order = np.random.default_rng(seed).permutation(dataset.n)
    for i in order:
        yield int(dataset.ids[i]), dataset.x[i].copy()


# ------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    network: NetworkConfig
    params: dict[str, np.ndarray]
    adam: dict | None = None
    store: PseudoLabelStore = field(default_factory=PseudoLabelStore)
    rng_state: dict | None = None
    epochs_trained: int = 0
    epochs_boosted: int = 0
    run_config: dict | None = None
    format_version: int = FORMAT_VERSION

    def model(self):
        return params_from_arrays(self.network, self.params)


def _encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode_array(doc, name):
    try:
        shape = tuple(int(s) for s in doc["shape"])
        raw = base64.b64decode(doc["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"array {name!r} is malformed: {exc}") from None
    if len(raw) != 8 * int(np.prod(shape)):
        raise CheckpointError(f"array {name!r}: {len(raw)} bytes do not fit shape {shape}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def _checkpoint_body(ckpt: Checkpoint):
    adam = None
    if ckpt.adam is not None:
        adam = {k: v for k, v in ckpt.adam.items() if k not in ("m", "v")}
        adam["m"] = {k: _encode_array(v) for k, v in ckpt.adam["m"].items()}
        adam["v"] = {k: _encode_array(v) for k, v in ckpt.adam["v"].items()}
    return {
        "format_version": ckpt.format_version,
        "network": ckpt.network.to_dict(),
        "params": {k: _encode_array(v) for k, v in ckpt.params.items()},
        "adam": adam,
        "store": {
            "gamma": ckpt.store.gamma,
            "alpha": ckpt.store.alpha,
            "entries": [[int(k), int(lab), float(c)] for k, (lab, c) in sorted(ckpt.store.entries.items())],
        },
        "rng_state": ckpt.rng_state,
        "epochs_trained": ckpt.epochs_trained,
        "epochs_boosted": ckpt.epochs_boosted,
        "run_config": ckpt.run_config,
    }


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    body = json.dumps(_checkpoint_body(ckpt), sort_keys=True, indent=1).encode("utf-8")
    digest = hashlib.sha256(body).hexdigest()
    return f"{CHECKPOINT_MAGIC} {FORMAT_VERSION} sha256={digest}\n".encode("ascii") + body


def loads_checkpoint(blob: bytes) -> Checkpoint:
    header, sep, body = blob.partition(b"\n")
    if not sep:
        raise CheckpointError("truncated checkpoint: missing header line")
    try:
        magic, version, digest = header.decode("ascii").split(" ")
    except (UnicodeDecodeError, ValueError):
        raise CheckpointError("malformed checkpoint header") from None
    if magic != CHECKPOINT_MAGIC or not digest.startswith("sha256="):
        raise CheckpointError("not a TCL checkpoint")
    if version != str(FORMAT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if hashlib.sha256(body).hexdigest() != digest[len("sha256="):]:
        raise CheckpointError("checksum mismatch: checkpoint is truncated or corrupted")
    try:
        doc = json.loads(body.decode("utf-8"))
        network = NetworkConfig.from_dict(doc["network"])
        params = {k: _decode_array(v, k) for k, v in doc["params"].items()}
        adam = doc["adam"]
        if adam is not None:
            adam = dict(adam)
            adam["m"] = {k: _decode_array(v, k) for k, v in adam["m"].items()}
            adam["v"] = {k: _decode_array(v, k) for k, v in adam["v"].items()}
        store_doc = doc["store"]
        store = PseudoLabelStore(gamma=store_doc["gamma"], alpha=store_doc["alpha"])
        store.entries = {int(k): (int(lab), float(c)) for k, lab, c in store_doc["entries"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint body: {exc}") from None
    try:
        params_from_arrays(network, params)
    except ShapeError as exc:
        raise CheckpointError(f"parameter/config mismatch: {exc}") from None
    for label, _ in store.entries.values():
        if not 0 <= label < network.clusters:
            raise CheckpointError(f"stored pseudo label {label} outside [0, {network.clusters})")
    return Checkpoint(
        network=network,
        params=params,
        adam=adam,
        store=store,
        rng_state=doc["rng_state"],
        epochs_trained=int(doc["epochs_trained"]),
        epochs_boosted=int(doc["epochs_boosted"]),
        run_config=doc["run_config"],
        format_version=int(doc["format_version"]),
    )


def save_checkpoint(ckpt: Checkpoint, path):
    Path(path).write_bytes(dumps_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror}") from None
    return loads_checkpoint(blob)
