"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times the three kernel entry points on a small overhead-bound shape and a
larger BLAS-bound shape, and prints the speedup of the compiled core.

Run:  python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from modeconn._kernel import pykernel

try:
    from modeconn._kernel import _core
except ImportError:
    _core = None


SHAPES = [
    ("small (2,32,32,32,2) n=200 b=100", (2, 32, 32, 32, 2), 200, 100),
    ("wide (784,256,256,10) n=2000 b=100", (784, 256, 256, 10), 2000, 100),
]


def make_problem(widths, n, seed=0):
    rng = np.random.default_rng(seed)
    ws = [
        np.ascontiguousarray(rng.standard_normal((widths[i], widths[i + 1])) * 0.1)
        for i in range(len(widths) - 1)
    ]
    bs = [np.zeros(w) for w in widths[1:-1]]
    x = np.ascontiguousarray(rng.standard_normal((n, widths[0])))
    y = np.zeros((n, widths[-1]))
    y[np.arange(n), rng.integers(0, widths[-1], n)] = 1.0
    return ws, bs, x, y


def time_call(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_backend(impl, widths, n, batch, repeats):
    ws, bs, x, y = make_problem(widths, n)
    order = np.arange(n, dtype=np.int64)
    out = {}
    out["forward"] = time_call(lambda: impl.forward_logits(ws, bs, x, 0, 0.0), repeats)
    out["gradient"] = time_call(
        lambda: impl.grad_full(ws, bs, x, y, 0, 0.0, 0), repeats
    )

    def epoch():
        w2 = [w.copy() for w in ws]
        b2 = [b.copy() for b in bs]
        vw = [np.zeros_like(w) for w in ws]
        vb = [np.zeros_like(b) for b in bs]
        impl.run_epoch(w2, b2, vw, vb, x, y, order, batch, 0.01, 0.9, 0, 0.0, 0)

    out["epoch"] = time_call(epoch, repeats)
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if _core is None:
        print("compiled core not built; run `pip install -e .` first")
        return

    print(f"{'shape':<38}{'kernel':<10}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}")
    for name, widths, n, batch in SHAPES:
        py = bench_backend(pykernel, widths, n, batch, args.repeats)
        cc = bench_backend(_core, widths, n, batch, args.repeats)
        for key in ("forward", "gradient", "epoch"):
            print(
                f"{name:<38}{key:<10}{py[key] * 1e3:>12.3f}{cc[key] * 1e3:>13.3f}"
                f"{py[key] / cc[key]:>9.2f}x"
            )


if __name__ == "__main__":
    main()
