"""Pure-numpy fallback for the hot kernels in `_kernels_numba`.

Selected by setting SPEXTREMES_NO_NUMBA=1 (see `_kernels`). Semantics must
match the numba versions bit-for-bit up to floating-point reassociation;
parity is enforced by tests.
"""

import numpy as np
from scipy import special

XI_TOL = 1e-8
PMIN = 1e-12


def ndtri(p):
    return float(special.ndtri(p))


def _hermite_eval_arr(xq, xk, yk, dk):
    xq = np.clip(xq, xk[0], xk[-1])
    idx = np.clip(np.searchsorted(xk, xq, side="right") - 1, 0, xk.size - 2)
    h = xk[idx + 1] - xk[idx]
    t = (xq - xk[idx]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return (h00 * yk[idx] + h10 * h * dk[idx]
            + h01 * yk[idx + 1] + h11 * h * dk[idx + 1])


def hermite_eval(xq, xk, yk, dk):
    return float(_hermite_eval_arr(np.asarray([xq], dtype=float), xk, yk, dk)[0])


def _gev_logpdf_logcdf_arr(y, mu, logsig, xi):
    sig = np.exp(logsig)
    s = (y - mu) / sig
    gumbel = np.abs(xi) < XI_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    w = 1.0 + xi_safe * s
    ok = w > 0.0
    w_safe = np.where(ok, w, 1.0)
    t = np.where(gumbel, np.exp(-s), w_safe ** (-1.0 / xi_safe))
    lpdf = np.where(
        gumbel,
        -logsig - s - t,
        -logsig - (1.0 + 1.0 / xi_safe) * np.log(w_safe) - t,
    )
    lcdf = -t
    bad = ~ok & ~gumbel
    lpdf = np.where(bad, -np.inf, lpdf)
    lcdf = np.where(bad, np.where(xi > 0.0, -np.inf, 0.0), lcdf)
    return lpdf, lcdf


def gev_loglik_total(y, mu, logsig, xi):
    lpdf, _ = _gev_logpdf_logcdf_arr(y, mu, logsig, xi)
    if np.any(np.isneginf(lpdf)):
        return -np.inf
    return float(np.sum(lpdf))


def marginal_transform(y, mu, logsig, xi, gk, uk, du, lk, dl, x_out):
    """Gumbel-scale marginal transform; see the numba twin for the
    derivation of g = log(w)/xi."""
    lpdf, lcdf = _gev_logpdf_logcdf_arr(y, mu, logsig, xi)
    if np.any(np.isneginf(lpdf)):
        return -np.inf
    sig = np.exp(logsig)
    s = (y - mu) / sig
    gumbel = np.abs(xi) < XI_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    w = np.maximum(1.0 + xi_safe * s, 1e-300)
    g = np.where(gumbel, s, np.log(w) / xi_safe)
    u = _hermite_eval_arr(g, gk, uk, du)
    x_out[:] = np.sinh(u)
    logfx = _hermite_eval_arr(g, gk, lk, dl)
    return float(np.sum(lpdf - logfx))


def gauss_resid_loglik(x, rw, tau):
    r = (x - rw) / tau
    c = -np.log(tau) - 0.5 * np.log(2.0 * np.pi)
    return float(np.sum(c - 0.5 * r * r))
