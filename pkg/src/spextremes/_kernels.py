"""Kernel selection: numba-compiled hot loops by default, pure numpy when
SPEXTREMES_NO_NUMBA=1 or numba is unavailable.

`scripts/benchmark_kernels.py` compares the two paths.
"""

import os

_disable = os.environ.get("SPEXTREMES_NO_NUMBA", "").lower() in ("1", "true", "yes")

USING_NUMBA = False
if not _disable:
    try:
        from ._kernels_numba import (  # noqa: F401
            PMIN,
            XI_TOL,
            gauss_resid_loglik,
            gev_loglik_total,
            hermite_eval,
            marginal_transform,
            ndtri,
        )
        USING_NUMBA = True
    except ImportError:
        pass

if not USING_NUMBA:
    from ._kernels_numpy import (  # noqa: F401
        PMIN,
        XI_TOL,
        gauss_resid_loglik,
        gev_loglik_total,
        hermite_eval,
        marginal_transform,
        ndtri,
    )
