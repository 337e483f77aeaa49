"""Brute-force log-posterior evaluator, written independently of the
package internals: GEV terms via scipy.stats.genextreme, the copula
marginal via direct adaptive quadrature of the Pareto-product/Gaussian
convolution, quantiles via bracketed root finding, priors via scipy.stats,
and the latent-field term via scipy.stats.multivariate_normal.

Only container/state classes are taken from the package; every numeric
term is recomputed from its definition.
"""
import numpy as np
from scipy import integrate, optimize, special, stats

P_MIN = 1e-12
NUGGET_RANGE = 10.0


# -- copula marginal from first principles ----------------------------------

def pareto_product_pdf(v, alpha):
    """Density of V = R*W, R Pareto(alpha), W Pareto(1), both >= 1."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    m = v > 1.0
    vm = v[m]
    if alpha == 1.0:
        out[m] = np.log(vm) / vm ** 2
    else:
        out[m] = alpha * (vm ** -2.0 - vm ** (-alpha - 1.0)) / (alpha - 1.0)
    return out


def pareto_product_cdf(v, alpha):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    m = v > 1.0
    vm = v[m]
    if alpha == 1.0:
        out[m] = 1.0 - (1.0 + np.log(vm)) / vm
    else:
        out[m] = 1.0 - (alpha / vm - vm ** -alpha) / (alpha - 1.0)
    return out


def _phi(e, tau):
    return np.exp(-0.5 * (e / tau) ** 2) / (tau * np.sqrt(2.0 * np.pi))


def mixture_cdf(x, alpha, tau):
    """P(V + eps <= x) integrating over the truncated nugget (+-10 tau),
    matching the likelihood's declared truncation."""
    lo, hi = -NUGGET_RANGE * tau, min(NUGGET_RANGE * tau, x - 1.0)
    if hi <= lo:
        return 0.0
    val, _ = integrate.quad(
        lambda e: float(pareto_product_cdf(x - e, alpha)) * _phi(e, tau),
        lo, hi, epsabs=1e-12, epsrel=1e-11, limit=300)
    return float(min(max(val, 0.0), 1.0))


def mixture_pdf(x, alpha, tau):
    lo, hi = -NUGGET_RANGE * tau, min(NUGGET_RANGE * tau, x - 1.0)
    if hi <= lo:
        return 0.0
    val, _ = integrate.quad(
        lambda e: float(pareto_product_pdf(x - e, alpha)) * _phi(e, tau),
        lo, hi, epsabs=1e-14, epsrel=1e-11, limit=300)
    return float(max(val, 0.0))


def mixture_quantile(p, alpha, tau):
    lo = 1.0 - NUGGET_RANGE * tau - 1.0
    hi = 2.0
    while mixture_cdf(hi, alpha, tau) < p:
        hi = hi * 2.0 if hi < 16.0 else hi * hi
    g = lambda t: mixture_cdf(float(np.sinh(t)), alpha, tau) - p
    t = optimize.brentq(g, np.arcsinh(lo), np.arcsinh(hi), xtol=1e-13,
                        rtol=4 * np.finfo(float).eps)
    return float(np.sinh(t))


# -- posterior terms ---------------------------------------------------------

def _flat_gev_params(coefs, sampler):
    """Per-cell (mu, sigma, xi) from the nine coefficient columns."""
    c = coefs[sampler.j_idx]
    mu = (c[:, 0] + c[:, 1] * sampler.ghg_flat
          + c[:, 2] * sampler.pdsi_flat + c[:, 3] * sampler.eli_flat
          + c[:, 4] * sampler.urban_flat)
    sigma = np.exp(c[:, 5] + c[:, 6] * sampler.ghg_flat
                   + c[:, 7] * sampler.eli_flat)
    return mu, sigma, c[:, 8]


def _gev_cell_terms(y, mu, sigma, xi):
    """(sum logpdf, per-cell cdf), -inf outside support."""
    lp = stats.genextreme.logpdf(y, -xi, loc=mu, scale=sigma)
    if np.any(~np.isfinite(lp)):
        return -np.inf, None
    return float(np.sum(lp)), stats.genextreme.cdf(y, -xi, loc=mu,
                                                   scale=sigma)


def _matern(coords, rho, nu):
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    x = d / rho
    out = np.ones_like(x)
    m = x > 0
    out[m] = (2.0 ** (1 - nu) / special.gamma(nu)) * x[m] ** nu \
        * special.kv(nu, x[m])
    return out


def brute_force_log_posterior(sampler, state) -> float:
    """Recompute Sampler.log_posterior(state, exact=True) from scratch."""
    spec = sampler.spec
    pr = sampler.priors

    # ---- coefficient priors
    if np.any(np.abs(state.coefs[:, 8]) >= pr.xi_bound):
        return -np.inf
    lp = 0.0
    if spec.spatial_coefficients:
        if np.any(state.sigma_beta <= 0):
            return -np.inf
        w = state.weights
        nb = sampler.spline_cols.size
        for g in range(9):
            lp += float(np.sum(stats.norm.logpdf(
                w[g, 1:1 + nb], scale=state.sigma_beta[g])))
            fixed = np.concatenate([[w[g, 0]], w[g, 1 + nb:]])
            lp += float(np.sum(stats.norm.logpdf(fixed,
                                                 scale=pr.coef_scale)))
        lp += float(np.sum(stats.halfnorm.logpdf(
            state.sigma_beta, scale=pr.sigma_beta_scale)))
    else:
        active = list(spec.active_coefficients)
        lp += float(np.sum(stats.norm.logpdf(state.coefs[:, active],
                                             scale=pr.coef_scale)))

    mu, sigma, xi = _flat_gev_params(state.coefs, sampler)
    y = sampler.y_flat

    if not spec.data_level_copula:
        ll, _ = _gev_cell_terms(y, mu, sigma, xi)
        return -np.inf if ll == -np.inf else lp + ll

    # ---- dependence priors
    dep = state.dep
    if not (pr.nu_range[0] <= dep.nu <= pr.nu_range[1]):
        return -np.inf
    lp += float(stats.norm.logpdf(np.log(dep.tau2), loc=pr.logtau2_mean,
                                  scale=pr.logtau2_sd))
    lp += float(stats.norm.logpdf(np.log(dep.rho), loc=pr.logrho_mean,
                                  scale=pr.logrho_sd))

    # ---- latent priors: R_t Pareto(alpha), Z_t ~ N(0, Matern)
    alpha = (1.0 - dep.delta) / dep.delta
    if np.any(state.r < 1.0):
        return -np.inf
    lp += float(np.sum(np.log(alpha) - (alpha + 1.0) * np.log(state.r)))
    corr = _matern(sampler.coords, dep.rho, dep.nu)
    mvn = stats.multivariate_normal(mean=np.zeros(corr.shape[0]), cov=corr,
                                    allow_singular=False)
    lp += float(np.sum(mvn.logpdf(state.z)))

    # ---- copula likelihood, cell by cell
    gev_sum, cdf = _gev_cell_terms(y, mu, sigma, xi)
    if gev_sum == -np.inf:
        return -np.inf
    lp += gev_sum
    tau = float(np.sqrt(dep.tau2))
    w_pareto = 1.0 / stats.norm.sf(state.z)
    for i in range(y.size):
        p = float(np.clip(cdf[i], P_MIN, 1.0 - P_MIN))
        x = mixture_quantile(p, alpha, tau)
        fx = mixture_pdf(x, alpha, tau)
        rw = state.r[sampler.t_idx[i]] \
            * w_pareto[sampler.t_idx[i], sampler.j_idx[i]]
        lp += float(stats.norm.logpdf(x, loc=rw, scale=tau)) - np.log(fx)
    return lp
