"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick] [--json out.json]

Each kernel runs on inputs sized like a default training run (4096-entity
graph, 64x64 images in batches of 64, text buckets up to 512 characters).
The numba timings exclude the one-off JIT compilation.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from mrgcn import synth
from mrgcn.autodiff import SparseMatrix, kernels
from mrgcn.graph import build_graph
from mrgcn.trainer import ModelConfig, TrainConfig, train


def kernel_cases(rng, quick):
    scale = 4 if quick else 1
    n = 4096 // scale
    rel = 3
    dense = (rng.random((n, rel * n)) < 4.0 / n) * rng.random((n, rel * n))
    adj = SparseMatrix.from_dense(dense)
    feats = rng.normal(size=(rel * n, 16))
    images = rng.random((64 // scale, 16, 32, 32))
    text = rng.random((64 // scale, 64, 256))
    cols2 = kernels.im2col2d(images, 3, 3, 1)
    cols1 = kernels.im2col1d(text, 7, 3)
    pooled1, idx1 = kernels.maxpool1d(text, 2, 2)
    pooled2, idx2 = kernels.maxpool2d(images, 2, 2)
    return {
        "csr_matmul": lambda: kernels.csr_matmul(adj.indptr, adj.indices, adj.data, feats),
        "col2im1d": lambda: kernels.col2im1d(cols1, 64, 256, 7, 3),
        "col2im2d": lambda: kernels.col2im2d(cols2, 16, 32, 32, 3, 3, 1),
        "maxpool1d": lambda: kernels.maxpool1d(text, 2, 2),
        "maxpool1d_backward": lambda: kernels.maxpool1d_backward(np.ones_like(pooled1), idx1, 256, 2, 2),
        "maxpool2d": lambda: kernels.maxpool2d(images, 2, 2),
        "maxpool2d_backward": lambda: kernels.maxpool2d_backward(np.ones_like(pooled2), idx2, 32, 32, 2, 2),
    }


def training_case(quick):
    nodes = 512 if quick else 2048
    data = synth.generate(synth.SynthConfig(nodes=nodes, signal_entities=128, image_size=32, seed=0))
    graph = build_graph(data.triples, "split").add_inverse_and_identity()
    mc = ModelConfig(modalities=("txt", "img", "geo"), image_size=32)
    tc = TrainConfig(epochs=4, patience=3)
    return lambda: train(graph, data.split, mc, tc)


def best_time(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--quick", action="store_true", help="smaller inputs")
    parser.add_argument("--json", help="also write the timings here")
    args = parser.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    cases = kernel_cases(np.random.default_rng(0), args.quick)
    cases["train 4 epochs (txt+img+geo)"] = training_case(args.quick)
    rows = {}
    previous = kernels.get_backend()
    try:
        for name, fn in cases.items():
            repeat = 1 if name.startswith("train") else args.repeat
            timings = {}
            for backend in ("numpy", "numba"):
                kernels.set_backend(backend)
                timings[backend] = best_time(fn, repeat)
            rows[name] = timings
    finally:
        kernels.set_backend(previous)

    width = max(map(len, rows))
    print(f"{'case'.ljust(width)}  {'numpy [ms]':>11}  {'numba [ms]':>11}  {'speed-up':>8}")
    for name, t in rows.items():
        print(f"{name.ljust(width)}  {t['numpy'] * 1e3:11.2f}  {t['numba'] * 1e3:11.2f}  "
              f"{t['numpy'] / t['numba']:7.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
