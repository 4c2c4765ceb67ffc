"""Benchmark the compiled propagation kernel against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--steps 1000] [--realizations 200]

Times the closed-system propagator and the noisy ensemble batch for each
importable backend and reports the cross-backend agreement.
"""

import argparse
import time

import numpy as np

from qugray._kernels import backend, get_backends


def bench(d, steps, realizations, repeats=5):
    rng = np.random.default_rng(0)
    drift = rng.normal(size=d) * 700.0
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    coupling = a + a.conj().T
    wave = rng.normal(size=steps) * 50.0
    noise = rng.normal(size=(realizations, steps, d)) * 2.0
    dt = 1.0 / steps
    results = {}
    for name, impl in get_backends().items():
        t0 = time.perf_counter()
        for _ in range(repeats):
            u0 = impl.propagate_piecewise(drift, coupling, wave, None, dt)
        closed = (time.perf_counter() - t0) / repeats
        t0 = time.perf_counter()
        us = impl.propagate_piecewise_batch(drift, coupling, wave, noise, dt)
        noisy = time.perf_counter() - t0
        results[name] = (closed, noisy, u0, us)
        print(f"  {name:9s} closed {1e3 * closed:8.2f} ms/run   "
              f"noisy batch (K={realizations}) {noisy:7.3f} s")
    if len(results) == 2:
        (c0, _, u0a, usa), (c1, _, u0b, usb) = results.values()
        print(f"  agreement: closed {np.abs(u0a - u0b).max():.2e}  "
              f"noisy {np.abs(usa - usb).max():.2e}  "
              f"speedup closed x{c0 / c1:.2f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--realizations", type=int, default=200)
    args = parser.parse_args()
    print(f"active backend: {backend()}")
    for d in (2, 3, 5):
        print(f"d = {d}, M = {args.steps}:")
        bench(d, args.steps, args.realizations)


if __name__ == "__main__":
    main()
