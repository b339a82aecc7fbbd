"""Compare the compiled inner loops with their numpy fallbacks.

Usage: python benchmarks/bench_core.py [--repeat 5]

Each kernel is timed on identical inputs from both backends, the outputs are
checked for agreement and the best-of-``repeat`` wall time is reported.
"""

import argparse
import timeit

import numpy as np

from gfrac import _pycore

try:
    from gfrac import _core
except ImportError:  # extension not built
    _core = None


def resolvent_case(T, K, J, rng):
    c = rng.standard_normal((T, K)) + 1j * rng.standard_normal((T, K))
    q = rng.uniform(0.1, 2.0, (T, K)) + 1j * rng.standard_normal((T, K))
    lam = rng.uniform(0.0, 100.0, J)
    return (np.ascontiguousarray(c), np.ascontiguousarray(q), lam), None


def march_case(N, B, rng):
    a = np.sort(rng.uniform(0.1, 1.0, N + 1))[::-1].copy()
    lam = rng.uniform(0.0, 10.0, B)
    rhs = rng.standard_normal((N + 1, B))
    w = np.zeros((N + 1, B))
    return (a, lam, rhs, w, 0), 3


CASES = [
    ("resolvent_sum", "T=64 K=32 J=1024", lambda r: resolvent_case(64, 32, 1024, r)),
    ("resolvent_sum", "T=256 K=32 J=4096", lambda r: resolvent_case(256, 32, 4096, r)),
    ("l1_march", "N=1024 B=1", lambda r: march_case(1024, 1, r)),
    ("l1_march", "N=4096 B=1", lambda r: march_case(4096, 1, r)),
    ("l1_march", "N=1024 B=64", lambda r: march_case(1024, 64, r)),
]


def best_time(fn, args, mutable, repeat):
    def call():
        a = list(args)
        if mutable is not None:
            a[mutable] = a[mutable].copy()
        return fn(*a)

    out = call()
    t = min(timeit.repeat(call, number=1, repeat=repeat))
    return t, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    opts = p.parse_args(argv)
    rng = np.random.default_rng(0)
    if _core is None:
        print("compiled core not available; only the fallback is timed")
    print(f"{'kernel':<14} {'size':<20} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for name, size, make in CASES:
        args, mutable = make(rng)
        tp, op = best_time(getattr(_pycore, name), args, mutable, opts.repeat)
        if _core is None:
            print(f"{name:<14} {size:<20} {tp:11.4f} {'-':>11} {'-':>8}")
            continue
        tc, oc = best_time(getattr(_core, name), args, mutable, opts.repeat)
        a = np.asarray(op[0] if isinstance(op, tuple) else op)
        b = np.asarray(oc[0] if isinstance(oc, tuple) else oc)
        if not np.allclose(a, b, rtol=1e-10, atol=1e-10):
            raise SystemExit(f"{name} {size}: backends disagree")
        print(f"{name:<14} {size:<20} {tp:11.4f} {tc:11.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
