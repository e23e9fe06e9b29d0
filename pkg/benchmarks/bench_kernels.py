"""Benchmark the vectorized gradient kernels against a per-example loop.

Run: python benchmarks/bench_kernels.py

The vectorized NumPy kernel is the selected backend: a fused Cython variant
was also evaluated while building this package and lost to NumPy on the
experiment shapes (the work is BLAS matmuls plus vectorized exp, which NumPy
already does at hardware speed), so the compiled core was dropped.
"""

import time

import numpy as np

from dpfed import kernels


def naive_logreg_clipped_grad_sum(X, labels, W, b, clip):
    """Reference implementation: explicit loop over examples."""
    d, L = W.shape
    gw = np.zeros((d, L))
    gb = np.zeros(L)
    norms = np.empty(len(labels))
    for i, (x, y) in enumerate(zip(X, labels)):
        z = x @ W + b
        z -= z.max()
        p = np.exp(z)
        p /= p.sum()
        e = p
        e[y] -= 1.0
        gx = np.outer(x, e)
        norm = np.sqrt(np.sum(gx * gx) + e @ e)
        norms[i] = norm
        w = 1.0 if np.isinf(clip) else min(1.0, clip / norm)
        gw += w * gx
        gb += w * e
    return gw, gb, norms


def bench(fn, args, repeat):
    fn(*args)  # warmup
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main():
    rng = np.random.default_rng(0)
    shapes = [
        ("synthetic batch (1000 x 40, 10 classes)", 1000, 40, 10, 300),
        ("digits batch (140 x 64, 10 classes)", 140, 64, 10, 300),
    ]
    for name, n, d, L, repeat in shapes:
        X = rng.standard_normal((n, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        W = 0.1 * rng.standard_normal((d, L))
        b = 0.1 * rng.standard_normal(L)
        labels = rng.integers(0, L, n)
        args = (X, labels, W, b, 1.0)
        t_vec = bench(kernels.logreg_clipped_grad_sum, args, repeat)
        t_naive = bench(naive_logreg_clipped_grad_sum, args, max(repeat // 30, 3))
        g1 = kernels.logreg_clipped_grad_sum(*args)
        g2 = naive_logreg_clipped_grad_sum(*args)
        ok = all(np.allclose(a, c, rtol=1e-10, atol=1e-13) for a, c in zip(g1, g2))
        print(f"{name}:")
        print(f"  vectorized: {t_vec * 1e6:9.1f} us/call")
        print(f"  naive loop: {t_naive * 1e6:9.1f} us/call  (x{t_naive / t_vec:.1f})")
        print(f"  agree: {ok}")


if __name__ == "__main__":
    main()
