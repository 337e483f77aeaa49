"""Parity of the compiled kernels with the pure-numpy fallback, and both
against reference implementations."""
import numpy as np
import pytest
from scipy import special, stats

from spextremes import _kernels_numpy as knp
from spextremes.transform import MarginalTable

try:
    from spextremes import _kernels_numba as knb
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")


def _cells(rng, n=500, xi_lo=-0.6, xi_hi=0.6):
    mu = rng.uniform(20, 40, n)
    logsig = rng.uniform(-0.5, 1.5, n)
    xi = rng.uniform(xi_lo, xi_hi, n)
    # draw strictly inside the support via the inverse CDF
    u = rng.uniform(0.001, 0.999, n)
    safe = np.where(np.abs(xi) < 1e-8, 1.0, xi)
    y = np.where(np.abs(xi) < 1e-8,
                 mu - np.exp(logsig) * np.log(-np.log(u)),
                 mu + np.exp(logsig) * (np.power(-np.log(u), -safe) - 1)
                 / safe)
    return y, mu, logsig, xi


def test_numpy_gev_loglik_matches_scipy(rng):
    y, mu, logsig, xi = _cells(rng)
    expected = sum(stats.genextreme.logpdf(yi, -x, loc=m, scale=np.exp(ls))
                   for yi, m, ls, x in zip(y, mu, logsig, xi))
    assert knp.gev_loglik_total(y, mu, logsig, xi) == \
        pytest.approx(expected, abs=1e-7)


def test_numpy_gev_loglik_out_of_support(rng):
    y, mu, logsig, xi = _cells(rng, xi_lo=-0.5, xi_hi=-0.2)
    y[123] = mu[123] + np.exp(logsig[123]) / (-xi[123]) + 1.0
    assert np.isneginf(knp.gev_loglik_total(y, mu, logsig, xi))


def test_numpy_gauss_resid_loglik_oracle(rng):
    x = rng.normal(3, 2, 200)
    rw = rng.uniform(1, 5, 200)
    tau = 0.7
    expected = float(np.sum(stats.norm.logpdf(x, loc=rw, scale=tau)))
    assert knp.gauss_resid_loglik(x, rw, tau) == pytest.approx(expected,
                                                               abs=1e-9)


def test_numpy_ndtri_matches_scipy():
    for p in (1e-10, 0.01, 0.5, 0.975, 1 - 1e-10):
        assert knp.ndtri(p) == pytest.approx(float(special.ndtri(p)),
                                             abs=1e-12)


def test_numpy_marginal_transform_oracle(rng):
    """Sum of log f_Y - log f_X and per-cell x against exact evaluation."""
    from spextremes.scale_mixture import marginal_pdf_x, marginal_quantile_x
    from spextremes.gev import GevParams, gev_cdf, gev_logpdf

    delta, tau2 = 0.45, 0.8
    tab = MarginalTable(delta, tau2)
    y, mu, logsig, xi = _cells(rng, n=40)
    x = np.empty(40)
    total = knp.marginal_transform(y, mu, logsig, xi, tab.gk, tab.uk,
                                   tab.du, tab.lk, tab.dl, x)
    expected = 0.0
    for i in range(40):
        gp = GevParams(mu[i], float(np.exp(logsig[i])), xi[i])
        p = float(gev_cdf(y[i], gp))
        xe = marginal_quantile_x(p, delta, tau2)
        assert x[i] == pytest.approx(xe, rel=1e-5, abs=1e-6)
        expected += gev_logpdf(y[i], gp) - np.log(marginal_pdf_x(xe, delta,
                                                                 tau2))
    assert total == pytest.approx(expected, abs=1e-3)


def test_numpy_marginal_transform_out_of_support(rng):
    tab = MarginalTable(0.5, 1.0)
    y, mu, logsig, xi = _cells(rng, n=30, xi_lo=-0.5, xi_hi=-0.2)
    y[7] = mu[7] + np.exp(logsig[7]) / (-xi[7]) + 0.5
    x = np.empty(30)
    assert np.isneginf(knp.marginal_transform(y, mu, logsig, xi, tab.gk,
                                              tab.uk, tab.du, tab.lk,
                                              tab.dl, x))


@needs_numba
def test_parity_gev_loglik(rng):
    for xi_rng in [(-0.6, 0.6), (-1e-9, 1e-9)]:     # includes Gumbel branch
        y, mu, logsig, xi = _cells(rng, xi_lo=xi_rng[0], xi_hi=xi_rng[1])
        a = knb.gev_loglik_total(y, mu, logsig, xi)
        b = knp.gev_loglik_total(y, mu, logsig, xi)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


@needs_numba
def test_parity_marginal_transform(rng):
    tab = MarginalTable(0.4, 1.0)
    for xi_rng in [(-0.6, 0.6), (-1e-9, 1e-9)]:
        y, mu, logsig, xi = _cells(rng, xi_lo=xi_rng[0], xi_hi=xi_rng[1])
        xa = np.empty_like(y)
        xb = np.empty_like(y)
        a = knb.marginal_transform(y, mu, logsig, xi, tab.gk, tab.uk,
                                   tab.du, tab.lk, tab.dl, xa)
        b = knp.marginal_transform(y, mu, logsig, xi, tab.gk, tab.uk,
                                   tab.du, tab.lk, tab.dl, xb)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-8)
        np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-10)


@needs_numba
def test_parity_marginal_transform_out_of_support(rng):
    tab = MarginalTable(0.4, 1.0)
    y, mu, logsig, xi = _cells(rng, n=30, xi_lo=-0.5, xi_hi=-0.2)
    y[0] = mu[0] + np.exp(logsig[0]) / (-xi[0]) + 0.5
    xa, xb = np.empty(30), np.empty(30)
    a = knb.marginal_transform(y, mu, logsig, xi, tab.gk, tab.uk, tab.du,
                               tab.lk, tab.dl, xa)
    b = knp.marginal_transform(y, mu, logsig, xi, tab.gk, tab.uk, tab.du,
                               tab.lk, tab.dl, xb)
    assert np.isneginf(a) and np.isneginf(b)


@needs_numba
def test_parity_gauss_resid_and_ndtri(rng):
    x = rng.normal(3, 2, 300)
    rw = rng.uniform(1, 5, 300)
    assert knb.gauss_resid_loglik(x, rw, 0.9) == \
        pytest.approx(knp.gauss_resid_loglik(x, rw, 0.9), rel=1e-13)
    for p in (1e-12, 0.3, 0.9999):
        assert knb.ndtri(p) == pytest.approx(knp.ndtri(p), abs=1e-9)


@needs_numba
def test_parity_hermite_eval(rng):
    xk = np.linspace(-2, 2, 50)
    yk = np.sin(xk)
    dk = np.cos(xk)
    for xq in (-2.0, -0.77, 0.0, 1.3, 2.0, 5.0, -5.0):  # incl. clamped
        assert knb.hermite_eval(xq, xk, yk, dk) == \
            pytest.approx(knp.hermite_eval(xq, xk, yk, dk), abs=1e-13)


def test_env_flag_selects_numpy_path():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c",
         "from spextremes import _kernels; print(_kernels.USING_NUMBA)"],
        capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "SPEXTREMES_NO_NUMBA": "1"})
    assert out.stdout.strip() == "False"
