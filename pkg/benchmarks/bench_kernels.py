"""Compare the compiled kernels with the numpy fallback.

Micro-benchmarks call both backend modules directly. The end-to-end rows run
one training epoch and a full-dataset assignment in a subprocess per backend,
because the backend is fixed at import time.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from tcl.kernels import available_backends

END_TO_END = """
import json, time
from tcl import BACKEND
from tcl.config import RunConfig
from tcl.data import generate_blobs
from tcl.engine import assign, run_training
ds = generate_blobs(5, {n}, 32, 8.0, seed=0)
cfg = RunConfig(clusters=5, epochs_train=1)
t = time.perf_counter(); ckpt, _ = run_training(cfg, ds); train = time.perf_counter() - t
t = time.perf_counter(); assign(ckpt, ds.x); sweep = time.perf_counter() - t
print(json.dumps({{"backend": BACKEND, "train_epoch": train, "assign": sweep}}))
"""


def kernel_cases(rows):
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((rows, rows))
    partner = np.arange(rows, dtype=np.intp) ^ 1
    valid = np.ones((rows, rows), dtype=np.uint8)
    np.fill_diagonal(valid, 0)
    x = rng.standard_normal((rows, 256))
    w = rng.standard_normal((256, 128))
    b = rng.standard_normal(128)
    probs = rng.standard_normal((rows, 10))
    return {
        f"infonce_rows {rows}x{rows}": lambda m: m.infonce_rows(logits, partner, valid),
        f"dense_rows {rows}x256 @ 256x128": lambda m: m.dense_rows(x, w, b, True),
        f"softmax_rows {rows}x10": lambda m: m.softmax_rows(probs),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def end_to_end(n):
    out = {}
    for backend, env_value in (("cython", ""), ("python", "1")):
        env = {**os.environ, "TCL_PURE_PYTHON": env_value}
        proc = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                              capture_output=True, text=True, check=True)
        result = json.loads(proc.stdout)
        if result["backend"] == backend:
            out[backend] = result
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--quick", action="store_true", help="smaller inputs, skip end-to-end runs")
    args = parser.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback is available", file=sys.stderr)
    rows = 128 if args.quick else 512

    print(f"{'case':<34}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn in kernel_cases(rows).items():
        times = {name: best_time(lambda: fn(mod), args.repeat) for name, mod in backends.items()}
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<34}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times.values()) + f"{speedup:>9.1f}x")

    if not args.quick:
        results = end_to_end(2000)
        for key, label in (("train_epoch", "train epoch, n=2000"), ("assign", "assign sweep, n=2000")):
            times = {name: results[name][key] for name in backends if name in results}
            speedup = times["python"] / times["cython"] if len(times) == 2 else float("nan")
            print(f"{label:<34}" + "".join(f"{t * 1e3:>12.1f}ms" for t in times.values()) + f"{speedup:>9.1f}x")


if __name__ == "__main__":
    main()
