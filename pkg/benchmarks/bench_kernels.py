"""Time the numba and numpy kernel backends side by side.

Usage::

    python benchmarks/bench_kernels.py [--cells 55296] [--k 11] [--repeat 5]

Each kernel is run on both backends with identical inputs; the script checks
that outputs agree bit for bit before reporting timings. A full k-means fit is
timed last.
"""

import argparse
import time

import numpy as np

from mixzone import kernels
from mixzone.kmeans import KMeansConfig, kmeans
from mixzone.synthetic import BlobSpec, generate_blobs


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def as_bytes(out):
    if isinstance(out, tuple):
        return b"".join(as_bytes(o) for o in out)
    return np.asarray(out).tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=55296)
    ap.add_argument("--k", type=int, default=11)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    fs, _ = generate_blobs(BlobSpec(args.cells, args.k, sigma=0.05, seed=0, min_separation=5))
    X = fs.features
    rng = np.random.default_rng(1)
    C = X[rng.choice(X.shape[0], args.k, replace=False)]
    w = np.ones(X.shape[0])
    labels, mind = kernels._assign_np(X, C)

    cases = {
        "assign": lambda: kernels.assign(X, C),
        "cluster_sums": lambda: kernels.cluster_sums(X, w, labels, args.k),
        "weighted_total": lambda: kernels.weighted_total(w, mind),
        "min_sqdist_update": lambda: kernels.min_sqdist_update(X, C[0], np.full(X.shape[0], np.inf)),
    }
    backends = kernels.available_backends()
    previous = kernels.BACKEND
    print(f"{X.shape[0]} cells x {X.shape[1]} features, k={args.k}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + "   identical")
    try:
        for name, fn in cases.items():
            row, outs = [], []
            for b in backends:
                kernels.use_backend(b)
                fn()  # compile / warm caches
                t, out = best_of(fn, args.repeat)
                row.append(t)
                outs.append(as_bytes(out))
            same = all(o == outs[0] for o in outs)
            print(f"{name:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row) + f"   {same}")

        row, results = [], []
        for b in backends:
            kernels.use_backend(b)
            t, res = best_of(lambda: kmeans(X, args.k, KMeansConfig(k=args.k, restarts=1)), 1)
            row.append(t)
            results.append(res.assignments.tobytes() + np.float64(res.variance).tobytes())
        same = all(r == results[0] for r in results)
        print(f"{'kmeans (1 restart)':<20}" + "".join(f"{t:>11.2f}s" for t in row) + f"   {same}")
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
