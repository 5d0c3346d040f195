"""Timing comparison of the compiled kernels against their numpy twins.

Each hot loop in ltpid.kernels exists twice: a plain numpy implementation
(the *_numpy names) and the same function passed through numba's njit. The
library picks the compiled one unless LTPID_DISABLE_NUMBA is set. This
script times both on medium-sized problems and reports how far the outputs
drift apart. The linear-recursion kernels agree bit for bit; the nonlinear
pendulum can show ~1e-14 drift over long horizons because the compiled and
interpreted paths may round sin/cos differently in the last bit.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from ltpid import kernels


def best_time(fn, args, repeats):
    fn(*args)  # warm up; first jitted call includes compilation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def random_system(rng, period, nx):
    A = 0.3 * rng.standard_normal((period, nx, nx))
    B = rng.standard_normal((period, nx))
    C = rng.standard_normal((period, nx))
    return A, B, C


def build_cases(rng):
    A, B, C = random_system(rng, period=4, nx=8)
    u = rng.standard_normal(200_000)
    x0 = np.zeros(8)
    force = rng.standard_normal(20_000)
    pend = (10.0, 5.0, 9.8, 5.0, 4.0 * np.pi)
    return [
        ("ltp_simulate", kernels.ltp_simulate, kernels.ltp_simulate_numpy,
         (A, B, C, u, x0)),
        ("ltp_impulse", kernels.ltp_impulse, kernels.ltp_impulse_numpy,
         (A, B, C, 50_000)),
        ("pendulum_discretize", kernels.pendulum_discretize,
         kernels.pendulum_discretize_numpy,
         pend + (0.125, 4, 100_000)),
        ("pendulum_nonlinear", kernels.pendulum_nonlinear,
         kernels.pendulum_nonlinear_numpy,
         pend + (0.125, 50, force, 0.0, 0.0)),
    ]


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(a - b)))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per kernel (best is reported)")
    args = parser.parse_args()

    if not kernels.NUMBA_ENABLED:
        print("LTPID_DISABLE_NUMBA is set: both columns would time the "
              "numpy path. Unset it to benchmark the compiled kernels.")
        return 1

    rng = np.random.default_rng(20260817)
    print(f"{'kernel':22s} {'compiled':>12s} {'numpy':>12s} "
          f"{'speedup':>8s}  max|diff|")
    for name, fast, plain, call_args in build_cases(rng):
        t_fast = best_time(fast, call_args, args.repeats)
        t_plain = best_time(plain, call_args, args.repeats)
        drift = max_diff(fast(*call_args), plain(*call_args))
        print(f"{name:22s} {t_fast * 1e3:10.2f} ms {t_plain * 1e3:10.2f} ms "
              f"{t_plain / t_fast:7.1f}x  {drift:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
