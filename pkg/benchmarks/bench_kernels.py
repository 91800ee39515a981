#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]

Imports both backends directly, so it works regardless of which one the
package selected at import time.
"""
import argparse
import time

import numpy as np

from corenet import kernels
from corenet.kernels import _ref

try:
    from corenet.kernels import _speedups
except ImportError:
    _speedups = None


def timeit(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, ref_fn, fast_fn, args, repeats):
    t_ref = timeit(ref_fn, args, repeats)
    if fast_fn is None:
        print(f"{name:<40} pure {t_ref * 1e3:8.3f} ms   compiled (not built)")
        return
    t_fast = timeit(fast_fn, args, repeats)
    ratio = t_ref / t_fast if t_fast > 0 else float("inf")
    print(f"{name:<40} pure {t_ref * 1e3:8.3f} ms   compiled {t_fast * 1e3:8.3f} ms   x{ratio:5.1f}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    g = np.random.Generator(np.random.PCG64(0))
    print(f"active backend: {kernels.BACKEND}")

    for rows, cols in ((64, 129), (512, 513), (1500, 1501)):
        w = np.ascontiguousarray(g.normal(size=(rows, cols)))
        v = g.normal(size=cols)
        bench_case(f"matvec_dense {rows}x{cols}", _ref.matvec_dense,
                   getattr(_speedups, "matvec_dense", None) if _speedups else None,
                   (w, v), args.repeats)

    dense = g.normal(size=(800, 800)) * (g.random((800, 800)) < 0.1)
    indptr = [0]
    indices, values = [], []
    for row in dense:
        nz = np.nonzero(row)[0]
        indices.extend(nz)
        values.extend(row[nz])
        indptr.append(len(indices))
    csr = (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
           np.asarray(values), g.normal(size=800), 800)
    bench_case("matvec_csr 800x800 @10%", _ref.matvec_csr,
               getattr(_speedups, "matvec_csr", None) if _speedups else None,
               csr, args.repeats)

    for k, m in ((50, 2000), (2000, 50_000)):
        q = g.random(k)
        q /= q.sum()
        cum = np.cumsum(q)
        wts = g.uniform(0.5, 2.0, size=k)
        u = g.random(m)
        bench_case(f"sample_row k={k} m={m}", _ref.sample_row,
                   getattr(_speedups, "sample_row", None) if _speedups else None,
                   (cum, q, wts, u), args.repeats)

    for n_pts, dim in ((30, 256), (30, 2000)):
        w = g.normal(size=dim)
        a = np.abs(g.normal(size=(n_pts, dim)))
        bench_case(f"edge_sensitivities n={n_pts} d={dim}", _ref.edge_sensitivities,
                   getattr(_speedups, "edge_sensitivities", None) if _speedups else None,
                   (w, a, 1.0, dim - 1), args.repeats)


if __name__ == "__main__":
    main()
