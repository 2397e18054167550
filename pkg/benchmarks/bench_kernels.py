"""
Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--units 50] [--periods 100] [--repeat 20]

Both backends get identical inputs; the script checks that the outputs agree
before reporting per-call times and the speed-up. It also times one full
``fit_arma`` + ``fit_garch`` pass per backend, since the kernels dominate the
estimators' running time.
"""

import argparse
import timeit

import numpy as np

from pagarch import _kernels_python, kernels
from pagarch.arma import fit_arma
from pagarch.garch import fit_garch
from pagarch.model import ArmaParams, GarchParams, ModelOrders, simulate

try:
    from pagarch import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None


def cases(n, t, rng):
    w = rng.standard_normal((n, t))
    u2 = rng.standard_normal((n, t)) ** 2
    omega = rng.uniform(1, 3, n)
    psi = np.array([0.3])
    tau, nu = np.array([0.2]), np.array([0.4])
    eps = rng.standard_normal((n, t))
    xb = 3.0 * rng.standard_normal((n, t))
    mu = rng.standard_normal(n)
    return {
        "ma_filter": lambda m: m.ma_filter(w, psi),
        "concentrated_ssr": lambda m: m.concentrated_ssr(w, psi),
        "garch_variance": lambda m: m.garch_variance(u2, omega * 0.4, tau, nu, omega),
        "garch_nll": lambda m: m.garch_nll(u2, omega * 0.4, tau, nu, omega),
        "simulate_arma_garch": lambda m: m.simulate_arma_garch(
            eps, xb, mu, np.array([0.3]), psi, omega, tau, nu
        ),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def per_call(fn, repeat):
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat


def fit_time(n, t):
    rng = np.random.default_rng(0)
    orders = ModelOrders(1, 1, 1, 1, 1)
    arma = ArmaParams(rng.standard_normal(n), [3.0], [0.3], [0.3])
    garch = GarchParams(rng.uniform(1, 3, n), [0.2], [0.4])
    panel = simulate(orders, arma, garch, t, seed=1)

    def fit():
        f = fit_arma(panel, orders)
        fit_garch(f.residuals)

    return per_call(fit, 1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--units", type=int, default=50)
    parser.add_argument("--periods", type=int, default=100)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not available; nothing to compare")
        return
    rng = np.random.default_rng(1)
    print(f"N={args.units} T={args.periods}")
    print(f"{'kernel':<22}{'compiled (us)':>15}{'python (us)':>15}{'speed-up':>10}")
    for name, call in cases(args.units, args.periods, rng).items():
        if not same(call(_kernels), call(_kernels_python)):
            raise SystemExit(f"{name}: backends disagree")
        fast = per_call(lambda: call(_kernels), args.repeat)
        slow = per_call(lambda: call(_kernels_python), args.repeat)
        print(f"{name:<22}{fast * 1e6:15.1f}{slow * 1e6:15.1f}{slow / fast:10.1f}")
    timings = {}
    for label, impl in (("compiled", _kernels), ("python", _kernels_python)):
        kernels._impl = impl
        timings[label] = fit_time(args.units, args.periods)
    kernels._impl = _kernels
    print(
        f"{'two-step fit (s)':<22}{timings['compiled']:15.3f}{timings['python']:15.3f}"
        f"{timings['python'] / timings['compiled']:10.1f}"
    )


if __name__ == "__main__":
    main()
