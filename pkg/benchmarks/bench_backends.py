"""Benchmark the compiled kernel backend against the numpy fallback.

The backend is fixed at import time, so this script re-executes itself in
a subprocess per backend (FORESTNMT_BACKEND=py / =c) and prints a
comparison table: kernel micro-benchmarks plus the numbers that actually
matter, forward+backward cost per sentence and a full training epoch.

    python benchmarks/bench_backends.py [--quick]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def timeit(fn, reps: int) -> float:
    fn()  # warm
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def run_worker(quick: bool) -> dict:
    import numpy as np

    from forestnmt import numcore as nc
    from forestnmt.corpus import Bitext, build_vocab, prepare_examples
    from forestnmt.numcore.backend import kernels as K
    from forestnmt.params import init_params
    from forestnmt.randforest import random_binary_tree, random_forest
    from forestnmt.train import TrainConfig, example_loss, train

    rng = np.random.default_rng(0)
    scale = 0.2 if quick else 1.0
    results = {"backend": nc.backend_name()}

    # kernel micro-benchmarks
    A = rng.uniform(-1, 1, (32, 32))
    x = rng.uniform(-1, 1, 32)
    M = rng.uniform(-1, 1, (12, 32))
    reps = int(20000 * scale)
    results["matvec 32x32 (us)"] = timeit(lambda: K.matmul(A, x), reps) * 1e6
    results["sigmoid 32 (us)"] = timeit(lambda: K.sigmoid(x), reps) * 1e6
    results["mat+vec 12x32 (us)"] = timeit(lambda: K.mv_add(M, x), reps) * 1e6
    results["softmax 32 (us)"] = timeit(lambda: K.softmax1d(x), reps) * 1e6

    # macro: forest-mode sentence loss, forward + backward
    params = init_params("forest", 24, 24, 32, 16, seed=1)
    forest = random_forest(np.random.default_rng(3), min_words=6, max_words=6)
    ids = [int(i) for i in rng.integers(0, 24, 6)]
    target = [int(i) for i in rng.integers(4, 24, 8)] + [2]
    from forestnmt.corpus import Example

    ex = Example(ids, target, forest, None, 6)

    def fwd_bwd():
        with nc.Tape() as tape:
            nc.backward(example_loss(ex, params), tape)
        params.zero_grads()

    results["forest sentence fwd+bwd (ms)"] = timeit(fwd_bwd, int(300 * scale)) * 1e3

    # macro: one training epoch on a small synthetic corpus
    gen = np.random.default_rng(5)
    pairs = []
    for _ in range(64):
        n = int(gen.integers(3, 6))
        src = [f"s{int(i)}" for i in gen.integers(0, 6, n)]
        tgt = [f"t{int(i)}" for i in gen.integers(0, 6, int(gen.integers(2, 5)))]
        from forestnmt.forest import forest_from_tree

        pairs.append((src, tgt, forest_from_tree(random_binary_tree(gen, n), n)))
    bt = Bitext(pairs)
    config = TrainConfig(mode="forest", hidden=16, embed=8, lr=0.1, batch_size=16,
                         max_epochs=1, patience=5, seed=2, min_freq=1)
    t0 = time.perf_counter()
    train(bt, bt, config)
    results["forest epoch, 64 pairs H=16 (ms)"] = (time.perf_counter() - t0) * 1e3
    return results


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--worker", choices=("py", "c"), help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(run_worker(args.quick)))
        return 0

    rows = {}
    for backend in ("py", "c"):
        env = dict(os.environ, FORESTNMT_BACKEND=backend)
        cmd = [sys.executable, __file__, "--worker", backend]
        if args.quick:
            cmd.append("--quick")
        try:
            out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        except subprocess.CalledProcessError as exc:
            if backend == "c":
                print("compiled backend unavailable (build it with "
                      "`python setup.py build_ext --inplace`); skipping comparison")
                print(exc.stderr, file=sys.stderr)
                backend_rows = None
            else:
                raise
        else:
            backend_rows = json.loads(out.stdout.strip().splitlines()[-1])
        rows[backend] = backend_rows

    numpy_rows = rows["py"]
    c_rows = rows["c"]
    name_w = max(len(k) for k in numpy_rows if k != "backend") + 2
    print(f"{'benchmark':<{name_w}} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for key, base in numpy_rows.items():
        if key == "backend":
            continue
        if c_rows is None:
            print(f"{key:<{name_w}} {base:10.2f} {'-':>10} {'-':>8}")
        else:
            fast = c_rows[key]
            print(f"{key:<{name_w}} {base:10.2f} {fast:10.2f} {base / fast:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
