#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

The package selects the kernel path at import time from the
SPEXTREMES_NO_NUMBA environment variable; here both implementations are
imported directly and timed on identical inputs.

Usage: python3 scripts/benchmark_kernels.py [n_cells] [repeats]
"""

import sys
import time

import numpy as np

from spextremes import _kernels_numba as knb
from spextremes import _kernels_numpy as knp
from spextremes.transform import MarginalTable


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 3500
    repeats = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    rng = np.random.default_rng(0)

    mu = 35.0 + rng.normal(0, 2, n)
    logsig = np.full(n, 0.3) + rng.normal(0, 0.1, n)
    xi = np.full(n, -0.2)
    # Draw y through the GEV quantile function so every cell lies strictly
    # inside the support; an out-of-support cell would let the kernels
    # early-exit with -inf and make the timing meaningless.
    u = rng.uniform(0.001, 0.999, n)
    y = mu + np.exp(logsig) * (np.power(-np.log(u), -xi) - 1.0) / xi
    table = MarginalTable(0.4, 1.0)
    x = np.empty(n)
    rw = rng.uniform(1, 5, n)

    cases = {
        "gev_loglik_total":
            (lambda: knb.gev_loglik_total(y, mu, logsig, xi),
             lambda: knp.gev_loglik_total(y, mu, logsig, xi)),
        "marginal_transform":
            (lambda: knb.marginal_transform(y, mu, logsig, xi, table.gk,
                                            table.uk, table.du, table.lk,
                                            table.dl, x),
             lambda: knp.marginal_transform(y, mu, logsig, xi, table.gk,
                                            table.uk, table.du, table.lk,
                                            table.dl, x)),
        "gauss_resid_loglik":
            (lambda: knb.gauss_resid_loglik(x, rw, 1.0),
             lambda: knp.gauss_resid_loglik(x, rw, 1.0)),
    }

    print(f"n_cells={n}, repeats={repeats} (best-of shown)")
    print(f"{'kernel':24s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, (f_nb, f_np) in cases.items():
        a, b = f_nb(), f_np()   # warm-up compile + parity sanity check
        if np.isfinite(a) and abs(a - b) > 1e-6 * max(1.0, abs(a)):
            raise SystemExit(f"{name}: paths disagree ({a} vs {b})")
        t_nb = timeit(f_nb, repeats)
        t_np = timeit(f_np, repeats)
        print(f"{name:24s} {t_nb * 1e6:9.1f}us {t_np * 1e6:9.1f}us "
              f"{t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
