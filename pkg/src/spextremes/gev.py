"""Generalized extreme value margins: CDF/PDF/quantile, risk probability,
upper bound, and the covariate-driven parameter maps.

All functions accept scalars or numpy arrays (broadcasting) and switch to
the Gumbel limit when |xi| < XI_TOL to avoid cancellation near xi = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

XI_TOL = 1e-8


@dataclass(frozen=True)
class GevParams:
    """Location/scale/shape of a single GEV distribution."""
    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma) and np.isfinite(self.xi)):
            raise ValueError("GEV parameters must be finite")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class GevCoefficients:
    """The nine per-location coefficients driving the covariate model:
    mu = mu0 + mu1*GHG + mu2*PDSI + mu3*ELI + mu4*Urban,
    log sigma = sig0 + sig1*GHG + sig2*ELI, xi constant in time.
    """
    mu0: float
    mu1: float
    mu2: float
    mu3: float
    mu4: float
    sig0: float
    sig1: float
    sig2: float
    xi: float

    NAMES = ("mu0", "mu1", "mu2", "mu3", "mu4", "sig0", "sig1", "sig2", "xi")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.NAMES], dtype=float)


def _split(p):
    if isinstance(p, GevParams):
        return p.mu, p.sigma, p.xi
    return p


def gev_cdf(y, p: GevParams):
    """GEV CDF; clamped to {0, 1} outside support."""
    mu, sigma, xi = _split(p)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite y")
    s = (y - mu) / sigma
    if abs(xi) < XI_TOL:
        out = np.exp(-np.exp(-s))
    else:
        w = 1.0 + xi * s
        ok = w > 0
        t = np.where(ok, w, 1.0) ** (-1.0 / xi)
        out = np.where(ok, np.exp(-t), 1.0 if xi < 0 else 0.0)
    return out if out.ndim else float(out)


def gev_logpdf(y, p: GevParams):
    """GEV log density; -inf outside support."""
    mu, sigma, xi = _split(p)
    y = np.asarray(y, dtype=float)
    s = (y - mu) / sigma
    if abs(xi) < XI_TOL:
        out = -np.log(sigma) - s - np.exp(-s)
    else:
        w = 1.0 + xi * s
        ok = w > 0
        w_safe = np.where(ok, w, 1.0)
        t = w_safe ** (-1.0 / xi)
        out = np.where(ok, -np.log(sigma) - (1.0 + 1.0 / xi) * np.log(w_safe) - t,
                       -np.inf)
    return out if out.ndim else float(out)


def gev_pdf(y, p: GevParams):
    """GEV density; zero outside support."""
    lp = gev_logpdf(y, p)
    return np.exp(lp) if np.ndim(lp) else float(np.exp(lp))


def gev_quantile(q, p: GevParams):
    """Inverse CDF; requires 0 < q < 1."""
    mu, sigma, xi = _split(p)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or np.any(q >= 1):
        raise ValueError("q must lie strictly in (0, 1)")
    ell = -np.log(q)
    if abs(xi) < XI_TOL:
        out = mu - sigma * np.log(ell)
    else:
        out = mu + sigma * (ell ** (-xi) - 1.0) / xi
    return out if out.ndim else float(out)


def gev_quantile_arrays(q, mu, sigma, xi):
    """Inverse CDF with cellwise parameter arrays (broadcasting)."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or np.any(q >= 1):
        raise ValueError("q must lie strictly in (0, 1)")
    mu, sigma, xi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (mu, sigma, xi)))
    ell = -np.log(q)
    gumbel = np.abs(xi) < XI_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    out = np.where(gumbel, mu - sigma * np.log(ell),
                   mu + sigma * (ell ** (-xi_safe) - 1.0) / xi_safe)
    return out if out.ndim else float(out)


def risk_probability(u, p: GevParams):
    """Probability of exceeding threshold u, 1 - F(u); zero at/above the
    upper bound when xi < 0."""
    c = gev_cdf(u, p)
    return 1.0 - c


def upper_bound(p: GevParams) -> float:
    """Finite endpoint mu - sigma/xi when xi < -XI_TOL, else +inf."""
    mu, sigma, xi = _split(p)
    if xi < -XI_TOL:
        return mu - sigma / xi
    return np.inf


def evaluate_params(c: GevCoefficients, ghg: float, pdsi: float, eli: float,
                    urban: float) -> GevParams:
    """Evaluate the covariate model at one station-year."""
    mu = c.mu0 + c.mu1 * ghg + c.mu2 * pdsi + c.mu3 * eli + c.mu4 * urban
    log_sigma = c.sig0 + c.sig1 * ghg + c.sig2 * eli
    sigma = np.exp(log_sigma)
    if not np.isfinite(sigma):
        raise ValueError(f"non-finite sigma from log sigma = {log_sigma}")
    return GevParams(mu=mu, sigma=sigma, xi=c.xi)


def evaluate_params_grid(coefs: np.ndarray, ghg: np.ndarray, pdsi: np.ndarray,
                         eli: np.ndarray, urban: np.ndarray):
    """Vectorized covariate model over a [year x station] grid.

    coefs: [station x 9] array ordered as GevCoefficients.NAMES;
    ghg/eli: [year]; pdsi/urban: [year x station].
    Returns (mu, log_sigma, xi) with mu/log_sigma [year x station], xi [station].
    """
    ghg = ghg[:, None]
    eli = eli[:, None]
    mu = (coefs[:, 0] + coefs[:, 1] * ghg + coefs[:, 2] * pdsi
          + coefs[:, 3] * eli + coefs[:, 4] * urban)
    log_sigma = coefs[:, 5] + coefs[:, 6] * ghg + coefs[:, 7] * eli
    return mu, log_sigma, coefs[:, 8]
