"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import generate_blobs, load_checkpoint, load_vectors, parse_jsonl_record, save_checkpoint, save_vectors
from .engine import ABLATIONS, assign, evaluate, run_ablation, run_boosting, run_training
from .errors import DataError, ShapeError, TCLError

log = logging.getLogger("tcl")


def _write_text(path, text):
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _config(args):
    return load_config(args.config) if args.config else RunConfig()


def cmd_gen_blobs(args):
    ds = generate_blobs(args.k, args.n, args.d, args.sep, seed=args.seed)
    save_vectors(ds, args.out)
    log.info("wrote %d x %d vectors to %s", ds.n, ds.d, args.out)


def cmd_train(args):
    config = _config(args)
    ckpt, report = run_training(config, load_vectors(args.data))
    save_checkpoint(ckpt, args.out)
    if args.report:
        _write_text(args.report, report.to_text())
    log.info("trained %d epochs: %s", ckpt.epochs_trained, report.metrics)


def cmd_boost(args):
    config = _config(args)
    ckpt, report = run_boosting(config, load_checkpoint(args.ckpt), load_vectors(args.data))
    save_checkpoint(ckpt, args.out)
    if args.report:
        _write_text(args.report, report.to_text())
    log.info("boosted %d epochs, %d pseudo labels: %s", ckpt.epochs_boosted, len(ckpt.store), report.metrics)


def _jsonl_records(stream):
    """Parse records lazily so that each instance is assigned as soon as it is read."""
    count = 0
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        x, _, ident = parse_jsonl_record(line, lineno)
        yield (count if ident is None else ident), np.asarray(x, dtype=np.float64)
        count += 1


@contextlib.contextmanager
def _open(path, mode):
    if str(path) == "-":
        yield sys.stdin if "r" in mode else sys.stdout
    else:
        try:
            fh = open(path, mode)
        except OSError as exc:
            raise DataError(f"cannot open {path}: {exc.strerror}") from None
        with fh:
            yield fh


def cmd_assign(args):
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.model()
    with _open(args.input, "r") as src, _open(args.out, "w") as dst:
        if args.format == "jsonl":
            records = _jsonl_records(src)
        else:
            ds = load_vectors(args.input, fmt="csv")
            records = zip(ds.ids.tolist(), ds.x)
        for ident, x in records:
            label, conf = assign(model, x)
            dst.write(json.dumps({"id": int(ident), "cluster": int(label[0]), "confidence": float(conf[0])}) + "\n")
            dst.flush()


def cmd_eval(args):
    report = evaluate(load_checkpoint(args.ckpt), load_vectors(args.data))
    _write_text(args.report, report.to_text())


def cmd_ablate(args):
    reports = run_ablation(_config(args), load_vectors(args.data), args.mode)
    parts = [f"# ablation {args.mode}: {name}\n{rep.to_text()}" for name, rep in reports.items()]
    _write_text(args.report, "\n".join(parts))


def build_parser():
    parser = argparse.ArgumentParser(prog="tcl", description="Twin contrastive clustering of feature vectors.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-blobs", help="write a synthetic Gaussian blob dataset")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--d", type=int, required=True, help="dimension")
    p.add_argument("--sep", type=float, required=True, help="center separation in within-cluster std units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".csv or .jsonl output path")
    p.set_defaults(func=cmd_gen_blobs)

    p = sub.add_parser("train", help="run the contrastive training stage")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("boost", help="run the pseudo-label boosting stage on a trained checkpoint")
    p.add_argument("--config")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_boost)

    p = sub.add_parser("assign", help="assign clusters to instances one at a time")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", default="-", help="input file, or - for stdin")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("eval", help="score a checkpoint against labelled data")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train every variant of one ablation axis")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=sorted(ABLATIONS), required=True)
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ShapeError as exc:
        # shape problems reaching the CLI come from the input files
        print(f"tcl: data error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except TCLError as exc:
        kind = {2: "config", 3: "data", 4: "numeric"}.get(exc.exit_code, "error")
        print(f"tcl: {kind} error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
