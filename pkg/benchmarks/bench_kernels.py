"""Compare the numba kernels with their pure Python / numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best wall time over ``--repeat`` runs for the compiled
kernel and for the fallback, plus their ratio. Compilation happens in a
warm-up call and is not timed.
"""
import argparse
import timeit

import numpy as np

from fintime._accel import NUMBA_ENABLED
from fintime.flows import _direction_kernel
from fintime.lyapunov import EnvelopeParams, oracle_batch
from fintime.symmat import EIG_FLOOR, jacobi_eigh


def _spd(rng, n):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    m = (q * rng.uniform(0.1, 10.0, size=n)) @ q.T
    return 0.5 * (m + m.T)


def cases():
    rng = np.random.default_rng(0)
    mats = {n: _spd(rng, n) for n in (2, 6, 20)}
    for n, m in mats.items():
        yield f"jacobi_eigh n={n}", lambda m=m: jacobi_eigh(m, 64), lambda m=m: jacobi_eigh.py_func(m, 64)
    u = rng.normal(size=2)
    # the fallback here still calls the compiled eigensolver, so only the contraction differs
    yield (
        "direction n=2",
        lambda: _direction_kernel(mats[2], u, -1.0, EIG_FLOOR, 1e-300),
        lambda: _direction_kernel.py_func(mats[2], u, -1.0, EIG_FLOOR, 1e-300),
    )
    params = [EnvelopeParams(e0, c, a) for a in (0.0, 0.5, 1.0, 2.0) for c in (0.5, 1.0, 3.0) for e0 in (0.1, 1.0, 10.0)]
    yield (
        "oracle_batch 36x20000",
        lambda: oracle_batch(params, 1.0, 20_000, stride=1000, use_numba=True),
        lambda: oracle_batch(params, 1.0, 20_000, stride=1000, use_numba=False),
    )


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not NUMBA_ENABLED:
        print("numba is disabled or missing; both columns run the fallback")
    print(f"{'kernel':<24}{'numba [ms]':>12}{'fallback [ms]':>15}{'speedup':>10}")
    for name, fast, slow in cases():
        tf, ts = best(fast, args.repeat), best(slow, args.repeat)
        print(f"{name:<24}{tf * 1e3:>12.4f}{ts * 1e3:>15.4f}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
