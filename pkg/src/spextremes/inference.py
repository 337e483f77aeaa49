"""Bayesian hierarchical sampler for the four model variants.

M1  pointwise, GHG in location only, constant scale/shape per station
M2  pointwise, all covariates
M3  spatially shared coefficients (basis expansion), independent years
M4  M3 plus the scale-mixture copula with latent (R_t, W_t)

A single adaptive random-walk Metropolis machine drives all non-latent
blocks: coefficient blocks are tuned toward acceptance 0.234 every
`adapt_interval` iterations during burn-in (scale update lam *=
exp(c * (rate - target)) with decaying gain, proposal covariance a 0.9/0.1
shrinkage blend of the recent sample covariance and the identity).
Latent fields use elliptical slice sampling on the underlying Gaussian
field; the yearly scaling factors use tuned random walks on the log scale.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import _kernels
from .basis import BasisSystem, build_basis, effective_n_splines
from .data_model import CovariateBundle, StationDataset
from .gev import GevCoefficients, evaluate_params_grid
from .scale_mixture import (
    DependenceParams,
    cholesky_with_jitter,
    gaussian_to_pareto,
    matern_matrix,
)
from .transform import MarginalTable

COEF_NAMES = GevCoefficients.NAMES
M1_ACTIVE = (0, 1, 5, 8)          # mu0, mu1, sig0, xi
ALL_ACTIVE = tuple(range(9))

VARIANTS = ("M1", "M2", "M3", "M4")


@dataclass(frozen=True)
class PriorConfig:
    """Proper, weakly informative priors (the source analysis states only
    that priors are noninformative)."""
    coef_scale: float = 100.0        # intercept/topography/pointwise coefs
    sigma_beta_scale: float = 10.0   # half-normal scale for sigma_beta
    logrho_mean: float | None = None  # default: log(half domain diameter)
    logrho_sd: float = 1.5
    nu_range: tuple = (0.2, 3.5)
    logtau2_mean: float = 0.0
    logtau2_sd: float = 2.0
    xi_bound: float = 1.0


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    n_splines: int = 99
    basis_seed: int = 0
    priors: PriorConfig = field(default_factory=PriorConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; "
                             f"expected one of {VARIANTS}")

    @property
    def active_coefficients(self) -> tuple:
        return M1_ACTIVE if self.variant == "M1" else ALL_ACTIVE

    @property
    def covariate_set(self) -> tuple:
        return ("GHG",) if self.variant == "M1" else \
            ("GHG", "PDSI", "ELI", "Urban")

    @property
    def spatial_coefficients(self) -> bool:
        return self.variant in ("M3", "M4")

    @property
    def data_level_copula(self) -> bool:
        return self.variant == "M4"


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 2000
    n_burn: int = 500
    thin: int = 1
    n_blocks: int = 10               # spline-coefficient blocks per surface
    adapt_interval: int = 10
    target_accept: float = 0.234
    seed: int = 0
    init_scale: float = 0.01         # initial lam for all tuned blocks
    table_knots: int = 2048

    def __post_init__(self):
        if self.n_burn >= self.n_iter:
            raise ValueError("n_burn must be smaller than n_iter")

    @property
    def n_records(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin


@dataclass
class ChainState:
    """All unknowns. `coefs` is the station-level coefficient matrix
    [station x 9]; for spatial variants it is derived from `weights`."""
    coefs: np.ndarray
    weights: np.ndarray | None = None        # [9 x n_columns]
    sigma_beta: np.ndarray | None = None     # [9]
    dep: DependenceParams | None = None
    r: np.ndarray | None = None              # [year]
    z: np.ndarray | None = None              # [year x station], Gaussian scale

    def copy(self) -> "ChainState":
        return ChainState(
            coefs=self.coefs.copy(),
            weights=None if self.weights is None else self.weights.copy(),
            sigma_beta=None if self.sigma_beta is None else self.sigma_beta.copy(),
            dep=self.dep, r=None if self.r is None else self.r.copy(),
            z=None if self.z is None else self.z.copy())

    @property
    def w(self) -> np.ndarray | None:
        return None if self.z is None else gaussian_to_pareto(self.z)


class AdaptiveBlock:
    """Bookkeeping for one tuned random-walk block."""

    def __init__(self, dim: int, lam: float):
        self.dim = dim
        self.lam = lam
        self.sigma_chol = np.eye(dim)
        self.accepts = 0
        self.proposals = 0
        self.batch = 0
        self._recent = []
        self._interval_accepts = 0
        self._interval_proposals = 0
        self._loglam_hist: list[float] = []
        self.frozen = False

    def step(self, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(self.lam) * (self.sigma_chol @ rng.standard_normal(self.dim))

    def record(self, accepted: bool, value: np.ndarray):
        self.proposals += 1
        self._interval_proposals += 1
        if accepted:
            self.accepts += 1
            self._interval_accepts += 1
        if not self.frozen:
            self._recent.append(np.atleast_1d(value).copy())

    def adapt(self, target: float, update_cov: bool = True):
        """Tune lam toward the target rate; optionally refresh the proposal
        covariance from the recent samples (0.9 sample cov + 0.1 identity).
        Callers stop covariance refreshes well before freezing so the scalar
        tuning can settle against a fixed shape; during that settle phase the
        log-scale trajectory is recorded so the freeze can use its average
        (Polyak-style) instead of the noisy final iterate."""
        if self.frozen or self._interval_proposals == 0:
            return
        self.batch += 1
        rate = self._interval_accepts / self._interval_proposals
        gain = 3.0 * self.batch ** -0.6
        self.lam = float(np.clip(self.lam * np.exp(gain * (rate - target)),
                                 1e-12, 1e4))
        if not update_cov:
            self._loglam_hist.append(np.log(self.lam))
        if update_cov and len(self._recent) >= 3 and self.dim >= 1:
            s = np.cov(np.asarray(self._recent).T, ddof=1)
            s = np.atleast_2d(s)
            sigma = 0.9 * s + 0.1 * np.eye(self.dim)
            try:
                self.sigma_chol = np.linalg.cholesky(sigma)
            except np.linalg.LinAlgError:
                self.sigma_chol = np.eye(self.dim)
        self._recent.clear()
        self._interval_accepts = 0
        self._interval_proposals = 0

    @property
    def rate(self) -> float:
        return self.accepts / self.proposals if self.proposals else np.nan


class Sampler:
    """Holds the data-side caches and implements every update kernel.

    The covariate bundle is used as-is (standardize upstream if desired)
    and must cover the dataset years.
    """

    def __init__(self, dataset: StationDataset, covariates: CovariateBundle,
                 spec: ModelSpec, cfg: McmcConfig,
                 basis: BasisSystem | None = None):
        self.dataset = dataset
        self.spec = spec
        self.cfg = cfg
        self.n_years, self.n_stations = dataset.maxima.shape
        self.years = dataset.years
        cov = covariates.subset(dataset.years)
        self.ghg, self.eli = cov.ghg, cov.eli
        self.pdsi, self.urban = cov.pdsi, cov.urban
        if spec.variant == "M1":
            # GHG only: remaining drivers enter with coefficients pinned at 0
            pass

        mask = np.isfinite(dataset.maxima)
        self.t_idx, self.j_idx = np.nonzero(mask)
        self.y_flat = dataset.maxima[self.t_idx, self.j_idx]
        self.pdsi_flat = self.pdsi[self.t_idx, self.j_idx]
        self.urban_flat = self.urban[self.t_idx, self.j_idx]
        self.ghg_flat = self.ghg[self.t_idx]
        self.eli_flat = self.eli[self.t_idx]
        self.station_cells = [np.nonzero(self.j_idx == j)[0]
                              for j in range(self.n_stations)]
        self.year_cells = [np.nonzero(self.t_idx == t)[0]
                           for t in range(self.n_years)]

        self.coords = dataset.coords()
        if spec.spatial_coefficients:
            self.n_splines = effective_n_splines(spec.n_splines,
                                                 self.n_stations)
            self.basis = basis if basis is not None else build_basis(
                list(dataset.stations), self.n_splines, seed=spec.basis_seed)
            self.n_columns = self.basis.n_columns
            b = self.n_splines
            chunks = np.array_split(np.arange(1, 1 + b),
                                    min(cfg.n_blocks, max(b, 1))) if b else []
            head = [np.concatenate([[0], np.arange(1 + b, self.n_columns)])]
            self.weight_blocks = head + [c for c in chunks if c.size]
            self.spline_cols = np.arange(1, 1 + b)
            self._fixed_cols = np.concatenate(
                [[0], np.arange(1 + b, self.n_columns)])
            # per-surface multiplier of the flat coefficient delta
            # (None means 1): mu0..mu4, sig0..sig2, xi
            self._drivers = (None, self.ghg_flat, self.pdsi_flat,
                             self.eli_flat, self.urban_flat,
                             None, self.ghg_flat, self.eli_flat, None)
        else:
            self.basis = None

        pr = spec.priors
        if pr.logrho_mean is None:
            span = self.coords.max(0) - self.coords.min(0)
            diam = float(np.hypot(*span))
            pr = PriorConfig(**{**pr.__dict__,
                                "logrho_mean": np.log(max(diam / 2, 1e-3))})
        self.priors = pr

        self.rng = np.random.default_rng(cfg.seed)
        self._blocks: dict[str, AdaptiveBlock] = {}
        self._tables: dict = {}
        self._chols: dict = {}

    # -- caches ------------------------------------------------------------
    # keyed by parameter values with a couple of slots so that one
    # rejected proposal never forces a rebuild of the current state

    def table(self, dep: DependenceParams) -> MarginalTable:
        key = (dep.delta, dep.tau2)
        if key in self._tables:
            self._tables[key] = self._tables.pop(key)   # mark recently used
        else:
            if len(self._tables) > 2:
                self._tables.pop(next(iter(self._tables)))
            self._tables[key] = MarginalTable(dep.delta, dep.tau2,
                                              n_knots=self.cfg.table_knots)
        return self._tables[key]

    def cholw(self, dep: DependenceParams) -> np.ndarray:
        key = (dep.rho, dep.nu)
        if key in self._chols:
            self._chols[key] = self._chols.pop(key)
        else:
            if len(self._chols) > 2:
                self._chols.pop(next(iter(self._chols)))
            self._chols[key] = cholesky_with_jitter(
                matern_matrix(self.coords, dep.rho, dep.nu))
        return self._chols[key]

    def block(self, name: str, dim: int) -> AdaptiveBlock:
        if name not in self._blocks:
            self._blocks[name] = AdaptiveBlock(dim, self.cfg.init_scale)
        return self._blocks[name]

    # -- parameter evaluation ----------------------------------------------

    def station_coefs(self, weights: np.ndarray) -> np.ndarray:
        return self.basis.design @ weights.T

    def flat_params(self, coefs: np.ndarray, cells=slice(None)):
        """GEV parameters at the observed cells (mu, log sigma, xi)."""
        c = coefs[self.j_idx[cells]]
        g = self.ghg_flat[cells]
        e = self.eli_flat[cells]
        mu = (c[:, 0] + c[:, 1] * g + c[:, 2] * self.pdsi_flat[cells]
              + c[:, 3] * e + c[:, 4] * self.urban_flat[cells])
        logsig = c[:, 5] + c[:, 6] * g + c[:, 7] * e
        return mu, logsig, c[:, 8]

    # -- likelihood --------------------------------------------------------

    def loglik_gev(self, coefs: np.ndarray, cells=slice(None)) -> float:
        mu, logsig, xi = self.flat_params(coefs, cells)
        return _kernels.gev_loglik_total(self.y_flat[cells], mu, logsig, xi)

    def marginal_part(self, coefs: np.ndarray, table: MarginalTable):
        """Copula-scale transform of all observed cells: returns
        (sum of [log f_Y - log f_X], x per cell)."""
        mu, logsig, xi = self.flat_params(coefs)
        x = np.empty_like(self.y_flat)
        total = _kernels.marginal_transform(
            self.y_flat, mu, logsig, xi,
            table.gk, table.uk, table.du, table.lk, table.dl, x)
        return total, x

    def resid_part(self, x: np.ndarray, r: np.ndarray, w: np.ndarray,
                   tau: float, cells=slice(None)) -> float:
        rw = r[self.t_idx[cells]] * w[self.t_idx[cells], self.j_idx[cells]]
        return _kernels.gauss_resid_loglik(x[cells], rw, tau)

    def loglik_m4(self, coefs, dep, r, w, x_out=None):
        table = self.table(dep)
        marg, x = self.marginal_part(coefs, table)
        if marg == -np.inf:
            return -np.inf, None
        ll = marg + self.resid_part(x, r, w, np.sqrt(dep.tau2))
        return ll, x

    # -- priors ------------------------------------------------------------

    def logprior_coefs(self, state: ChainState) -> float:
        pr = self.priors
        if np.any(np.abs(state.coefs[:, 8]) >= pr.xi_bound):
            return -np.inf
        if self.spec.spatial_coefficients:
            w = state.weights
            sb = state.sigma_beta
            if np.any(sb <= 0):
                return -np.inf
            spline = w[:, self.spline_cols]
            fixed = w[:, self._fixed_cols]
            nb = self.spline_cols.size
            total = float(
                -0.5 * np.sum((spline / sb[:, None]) ** 2)
                - nb * np.sum(np.log(sb)) - 4.5 * nb * np.log(2 * np.pi)
                - 0.5 * np.sum((fixed / pr.coef_scale) ** 2)
                - fixed.size * (np.log(pr.coef_scale) + 0.5 * np.log(2 * np.pi))
                # half-normal hyperprior on sigma_beta
                - 0.5 * np.sum((sb / pr.sigma_beta_scale) ** 2)
                - 9 * (np.log(pr.sigma_beta_scale) - 0.5 * np.log(2 / np.pi)))
            return total
        active = list(self.spec.active_coefficients)
        return _norm_logpdf_sum(state.coefs[:, active].ravel(), pr.coef_scale)

    def logprior_dependence(self, dep: DependenceParams) -> float:
        pr = self.priors
        if not (pr.nu_range[0] <= dep.nu <= pr.nu_range[1]):
            return -np.inf
        total = 0.0  # delta ~ U(0,1): constant inside support
        total += _norm_logpdf_sum(np.log(dep.tau2) - pr.logtau2_mean,
                                  pr.logtau2_sd)
        total += _norm_logpdf_sum(np.log(dep.rho) - pr.logrho_mean,
                                  pr.logrho_sd)
        return total

    def logprior_latents(self, state: ChainState) -> float:
        dep = state.dep
        alpha = dep.alpha
        if np.any(state.r < 1.0):
            return -np.inf
        total = float(np.sum(np.log(alpha) - (alpha + 1.0) * np.log(state.r)))
        chol = self.cholw(dep)
        sol = linalg.solve_triangular(chol, state.z.T, lower=True)
        total += (-0.5 * float(np.sum(sol ** 2))
                  - state.z.shape[0] * float(np.sum(np.log(np.diag(chol))))
                  - 0.5 * state.z.size * np.log(2 * np.pi))
        return total

    def log_posterior(self, state: ChainState, exact: bool = False) -> float:
        """Joint log density of data and all unknowns (up to a constant);
        -inf outside supports, never an exception.

        With exact=True the copula marginal transform is evaluated by
        adaptive quadrature and root finding instead of the interpolation
        table; this is slow and meant for validation on small instances.
        """
        lp = self.logprior_coefs(state)
        if lp == -np.inf:
            return -np.inf
        if self.spec.data_level_copula:
            lp += self.logprior_dependence(state.dep)
            if lp == -np.inf:
                return -np.inf
            lp += self.logprior_latents(state)
            if lp == -np.inf:
                return -np.inf
            if exact:
                ll = self._loglik_m4_exact(state)
            else:
                ll, _ = self.loglik_m4(state.coefs, state.dep,
                                       state.r, state.w)
        else:
            ll = self.loglik_gev(state.coefs)
        lp = lp + ll
        return lp if np.isfinite(lp) else -np.inf

    def _loglik_m4_exact(self, state: ChainState) -> float:
        from .scale_mixture import marginal_pdf_x, marginal_quantile_x
        from .transform import P_MIN
        from .gev import GevParams, gev_cdf, gev_logpdf
        dep = state.dep
        mu, logsig, xi = self.flat_params(state.coefs)
        w = state.w
        total = 0.0
        for i in range(self.y_flat.size):
            gp = GevParams(mu=mu[i], sigma=float(np.exp(logsig[i])),
                           xi=xi[i])
            lpdf = gev_logpdf(self.y_flat[i], gp)
            if lpdf == -np.inf:
                return -np.inf
            p = float(np.clip(gev_cdf(self.y_flat[i], gp),
                              P_MIN, 1.0 - P_MIN))
            x = marginal_quantile_x(p, dep.delta, dep.tau2)
            fx = marginal_pdf_x(x, dep.delta, dep.tau2)
            rw = state.r[self.t_idx[i]] * w[self.t_idx[i], self.j_idx[i]]
            resid = (x - rw) / np.sqrt(dep.tau2)
            total += (lpdf - np.log(fx)
                      - 0.5 * resid * resid - 0.5 * np.log(2 * np.pi)
                      - 0.5 * np.log(dep.tau2))
        return float(total)

    # -- initialization ----------------------------------------------------

    def initial_state(self) -> ChainState:
        coefs = np.zeros((self.n_stations, 9))
        for j in range(self.n_stations):
            cells = self.station_cells[j]
            fit = fit_station_mle(self.y_flat[cells], self.ghg_flat[cells],
                                  xi_bound=self.priors.xi_bound)
            coefs[j, 0], coefs[j, 1], coefs[j, 5], coefs[j, 8] = fit

        state = ChainState(coefs=coefs)
        if self.spec.spatial_coefficients:
            weights = np.zeros((9, self.n_columns))
            for g in range(9):
                weights[g] = _ridge_fit(self.basis, coefs[:, g], ridge=1.0,
                                        n_splines=self.n_splines)
            # keep xi strictly inside the prior support after smoothing; the
            # surface is linear in the weights, so shrink the whole surface
            # (state.coefs must remain exactly design @ weights because the
            # weight sweep maintains it incrementally)
            # a shape surface smoothed from noisy station fits is not worth
            # trusting beyond |xi| = 0.5; starting at the prior boundary
            # would stall the chain
            xi_max = np.max(np.abs(self.basis.design @ weights[8]))
            xi_cap = min(self.priors.xi_bound - 1e-3, 0.5)
            if xi_max > xi_cap:
                weights[8] *= xi_cap / xi_max
            state.weights = weights
            state.coefs = self.station_coefs(weights)
            # raise the log-scale intercept until every observation sits
            # strictly inside its GEV support
            mu, logsig, xi = self.flat_params(state.coefs)
            excess = np.log(np.maximum(-xi * (self.y_flat - mu), 1e-300)) \
                - logsig
            worst = float(np.max(excess))
            if worst > -0.05:
                weights[5, 0] += worst + 0.1
                state.coefs = self.station_coefs(weights)
            spline_sd = np.abs(weights[:, self.spline_cols]).std(axis=1) \
                if self.n_splines else np.ones(9)
            state.sigma_beta = np.maximum(spline_sd, 0.05)
        if self.spec.data_level_copula:
            pr = self.priors
            state.dep = DependenceParams(delta=0.3, tau2=1.0,
                                         rho=float(np.exp(pr.logrho_mean)),
                                         nu=1.0)
            state.r = np.full(self.n_years, 1.5)
            chol = self.cholw(state.dep)
            state.z = (self.rng.standard_normal((self.n_years,
                                                 self.n_stations)) @ chol.T)
            for _ in range(3):
                self.update_latents(state)
        return state

    # -- update kernels ------------------------------------------------------

    def _coef_logtarget(self, state: ChainState, coefs, weights=None,
                        sigma_beta=None, cells=slice(None), x_cache=None):
        trial = ChainState(coefs=coefs, weights=weights,
                           sigma_beta=state.sigma_beta if sigma_beta is None
                           else sigma_beta,
                           dep=state.dep, r=state.r, z=state.z)
        lp = self.logprior_coefs(trial)
        if lp == -np.inf:
            return -np.inf, None
        if self.spec.data_level_copula:
            ll, x = self.loglik_m4(coefs, state.dep, state.r, state.w)
            if ll == -np.inf:
                return -np.inf, None
            return lp + ll, x
        return lp + self.loglik_gev(coefs, cells), None

    def update_coefficients(self, state: ChainState):
        """Sweep every coefficient block once (Metropolis)."""
        if self.spec.spatial_coefficients:
            self._update_weights(state)
        else:
            self._update_pointwise(state)

    def _update_pointwise(self, state: ChainState):
        active = list(self.spec.active_coefficients)
        for j in range(self.n_stations):
            cells = self.station_cells[j]
            blk = self.block(f"station_{j}", len(active))
            cur = state.coefs[j, active]
            cur_ll = self.loglik_gev(state.coefs, cells) \
                + _norm_logpdf_sum(cur, self.priors.coef_scale)
            prop = cur + blk.step(self.rng)
            coefs = state.coefs.copy()
            coefs[j, active] = prop
            if abs(coefs[j, 8]) >= self.priors.xi_bound:
                new_ll = -np.inf
            else:
                new_ll = self.loglik_gev(coefs, cells) \
                    + _norm_logpdf_sum(prop, self.priors.coef_scale)
            accept = np.log(self.rng.uniform()) < new_ll - cur_ll
            if accept:
                state.coefs = coefs
            blk.record(accept, state.coefs[j, active])

    def _update_weights(self, state: ChainState):
        """Metropolis sweep over the basis-weight blocks.

        Proposals touch a single coefficient surface, so the flat GEV
        parameter arrays are updated incrementally (one axpy per proposal)
        and the likelihood is carried through the sweep; everything else
        the blocks condition on (latents, dependence, sigma_beta) is fixed.
        """
        copula = self.spec.data_level_copula
        mu, logsig, xi = self.flat_params(state.coefs)
        if copula:
            table = self.table(state.dep)
            tau = np.sqrt(state.dep.tau2)
            w = state.w
            rw = state.r[self.t_idx] * w[self.t_idx, self.j_idx]
            x = np.empty_like(self.y_flat)
            x_prop = np.empty_like(self.y_flat)
            targs = (table.gk, table.uk, table.du, table.lk, table.dl)
            cur_ll = _kernels.marginal_transform(
                self.y_flat, mu, logsig, xi, *targs, x)
            cur_ll += _kernels.gauss_resid_loglik(x, rw, tau)
        else:
            cur_ll = _kernels.gev_loglik_total(self.y_flat, mu, logsig, xi)
        pr = self.priors

        for g, name in enumerate(COEF_NAMES):
            drv = self._drivers[g]
            for k, cols in enumerate(self.weight_blocks):
                blk = self.block(f"{name}_b{k}", cols.size)
                step = blk.step(self.rng)
                old_w = state.weights[g, cols]
                new_w = old_w + step
                scale = pr.coef_scale if k == 0 else state.sigma_beta[g]
                dprior = -0.5 * (np.sum(new_w ** 2)
                                 - np.sum(old_w ** 2)) / scale ** 2
                dcol = self.basis.design[:, cols] @ step
                if g == 8 and np.any(np.abs(state.coefs[:, 8] + dcol)
                                     >= pr.xi_bound):
                    self.rng.uniform()   # keep draw count per proposal fixed
                    accept = False
                else:
                    dflat = dcol[self.j_idx] if drv is None \
                        else dcol[self.j_idx] * drv
                    mu_n, ls_n, xi_n = mu, logsig, xi
                    if g < 5:
                        mu_n = mu + dflat
                    elif g < 8:
                        ls_n = logsig + dflat
                    else:
                        xi_n = xi + dflat
                    if copula:
                        new_ll = _kernels.marginal_transform(
                            self.y_flat, mu_n, ls_n, xi_n, *targs, x_prop)
                        if new_ll != -np.inf:
                            new_ll += _kernels.gauss_resid_loglik(
                                x_prop, rw, tau)
                    else:
                        new_ll = _kernels.gev_loglik_total(
                            self.y_flat, mu_n, ls_n, xi_n)
                    accept = np.log(self.rng.uniform()) < \
                        new_ll + dprior - cur_ll
                    if accept:
                        state.weights[g, cols] = new_w
                        state.coefs[:, g] += dcol
                        mu, logsig, xi = mu_n, ls_n, xi_n
                        if copula:
                            x, x_prop = x_prop, x
                        cur_ll = new_ll
                blk.record(accept, state.weights[g, cols])

    def update_sigma_beta(self, state: ChainState):
        """Random walk on log sigma_beta per surface (spatial variants)."""
        if not self.spec.spatial_coefficients or not self.n_splines:
            return
        pr = self.priors
        for g, name in enumerate(COEF_NAMES):
            blk = self.block(f"sigma_beta_{name}", 1)
            spline = state.weights[g, self.spline_cols]
            cur = state.sigma_beta[g]

            def logt(s):
                # half-normal prior + normal likelihood of spline weights
                # + Jacobian of the log-scale walk
                return (_norm_logpdf_sum(spline, s)
                        - 0.5 * (s / pr.sigma_beta_scale) ** 2 + np.log(s))

            prop = float(cur * np.exp(blk.step(self.rng)[0]))
            accept = np.log(self.rng.uniform()) < logt(prop) - logt(cur)
            if accept:
                state.sigma_beta[g] = prop
            blk.record(accept, np.log(state.sigma_beta[g]))

    def update_dependence(self, state: ChainState):
        """Joint tuned random walk on (logit delta, log tau2, log rho,
        log nu); rebuilds the transform cache on acceptance."""
        if not self.spec.data_level_copula:
            return
        blk = self.block("dependence", 4)
        dep = state.dep
        cur = np.array([_logit(dep.delta), np.log(dep.tau2),
                        np.log(dep.rho), np.log(dep.nu)])
        prop = cur + blk.step(self.rng)
        dep_new = DependenceParams(delta=_expit(prop[0]),
                                   tau2=float(np.exp(prop[1])),
                                   rho=float(np.exp(prop[2])),
                                   nu=float(np.exp(prop[3])))
        new_lt = self._dependence_logtarget(state, dep_new, prop)
        cur_lt = self._dependence_logtarget(state, dep, cur)
        accept = np.log(self.rng.uniform()) < new_lt - cur_lt
        if accept:
            state.dep = dep_new
        blk.record(accept, np.array([_logit(state.dep.delta),
                                     np.log(state.dep.tau2),
                                     np.log(state.dep.rho),
                                     np.log(state.dep.nu)]))

    def _dependence_logtarget(self, state, dep, transformed):
        lp = self.logprior_dependence(dep)
        if lp == -np.inf:
            return -np.inf
        trial = ChainState(coefs=state.coefs, weights=state.weights,
                           sigma_beta=state.sigma_beta, dep=dep,
                           r=state.r, z=state.z)
        lat = self.logprior_latents(trial)
        if lat == -np.inf:
            return -np.inf
        ll, _ = self.loglik_m4(state.coefs, dep, state.r, state.w)
        if ll == -np.inf:
            return -np.inf
        # Jacobians of the transformed walk: logit(delta), log nu
        delta = _expit(transformed[0])
        jac = np.log(delta) + np.log1p(-delta) + transformed[3]
        return lp + lat + ll + jac

    def update_latents(self, state: ChainState):
        """Per-year updates: tuned random walk on log R_t, elliptical slice
        on the Gaussian field behind W_t (M4 only)."""
        if not self.spec.data_level_copula:
            return
        dep = state.dep
        tau = np.sqrt(dep.tau2)
        alpha = dep.alpha
        table = self.table(dep)
        marg, x = self.marginal_part(state.coefs, table)
        if marg == -np.inf:
            raise FloatingPointError("latent update from out-of-support state")
        chol = self.cholw(dep)
        w = state.w
        for t in range(self.n_years):
            cells = self.year_cells[t]
            if cells.size == 0:
                continue
            xt = x[cells]
            jt = self.j_idx[cells]
            # --- log R_t random walk ---
            blk = self.block(f"r_{t}", 1)
            r_cur = state.r[t]

            def logt_r(r):
                if r < 1.0:
                    return -np.inf
                resid = (xt - r * w[t, jt]) / tau
                # Pareto prior + Jacobian of log walk
                return float(-0.5 * np.sum(resid ** 2)) \
                    - (alpha + 1.0) * np.log(r) + np.log(r)

            r_prop = float(r_cur * np.exp(blk.step(self.rng)[0]))
            accept = np.log(self.rng.uniform()) < logt_r(r_prop) - logt_r(r_cur)
            if accept:
                state.r[t] = r_prop
            blk.record(accept, np.log(state.r[t]))

            # --- elliptical slice on z_t ---
            r_t = state.r[t]

            def loglik_z(z):
                wt = gaussian_to_pareto(z[jt])
                resid = (xt - r_t * wt) / tau
                return float(-0.5 * np.sum(resid ** 2))

            znew = _ess_step(state.z[t], loglik_z, chol, self.rng)
            state.z[t] = znew
            w[t] = gaussian_to_pareto(znew)

    def adapt_all(self, update_cov: bool = True):
        for blk in self._blocks.values():
            blk.adapt(self.cfg.target_accept, update_cov)

    def freeze_adaptation(self):
        """Stop tuning and reset counters so reported rates are
        post-burn-in only.  The frozen step scale is the geometric mean of
        the settle-phase trajectory, which averages out the batch-to-batch
        noise in the acceptance-rate estimates."""
        for blk in self._blocks.values():
            blk.frozen = True
            if blk._loglam_hist:
                blk.lam = float(np.exp(np.mean(blk._loglam_hist)))
            blk._loglam_hist.clear()
            blk.accepts = 0
            blk.proposals = 0
            blk._recent.clear()

    def acceptance_rates(self) -> dict:
        return {name: blk.rate for name, blk in self._blocks.items()}


def _ess_step(z0, loglik, chol, rng):
    """One elliptical slice sampling step (Murray, Adams & MacKay 2010)."""
    v = chol @ rng.standard_normal(z0.size)
    logy = loglik(z0) + np.log(rng.uniform())
    theta = rng.uniform(0.0, 2 * np.pi)
    lo, hi = theta - 2 * np.pi, theta
    while True:
        z = z0 * np.cos(theta) + v * np.sin(theta)
        if loglik(z) > logy:
            return z
        if theta < 0:
            lo = theta
        else:
            hi = theta
        theta = rng.uniform(lo, hi)


def _norm_logpdf_sum(v, scale):
    v = np.atleast_1d(v)
    return float(-0.5 * np.sum((v / scale) ** 2)
                 - v.size * (np.log(scale) + 0.5 * np.log(2 * np.pi)))


def _logit(p):
    return float(np.log(p) - np.log1p(-p))


def _expit(x):
    return float(1.0 / (1.0 + np.exp(-x)))


def _ridge_fit(basis, obs, ridge, n_splines):
    pen = np.zeros(basis.n_columns)
    pen[1:1 + n_splines] = ridge
    x = basis.design
    return linalg.solve(x.T @ x + np.diag(pen) + 1e-9 * np.eye(x.shape[1]),
                        x.T @ obs, assume_a="pos")


def fit_station_mle(y, ghg, xi_bound=1.0):
    """Single-station GEV fit with location linear in the GHG driver
    (M1 structure); used for initialization."""
    y = np.asarray(y, dtype=float)
    sd = max(float(np.std(y, ddof=1)), 1e-3)
    sig0 = sd * np.sqrt(6) / np.pi
    mu0 = float(np.mean(y)) - 0.5772 * sig0
    x0 = np.array([mu0, 0.0, np.log(sig0), -0.1])

    # Nelder-Mead with a finite out-of-support penalty: gradient-based
    # methods stall on the -inf likelihood boundary.
    xi_cap = xi_bound - 1e-3

    def nll(p):
        if abs(p[3]) > xi_cap:
            return 1e12
        mu = p[0] + p[1] * ghg
        val = -_kernels.gev_loglik_total(y, mu, np.full_like(y, p[2]),
                                         np.full_like(y, p[3]))
        return val if np.isfinite(val) else 1e12

    res = optimize.minimize(nll, x0, method="Nelder-Mead",
                            options={"maxiter": 4000, "xatol": 1e-8,
                                     "fatol": 1e-8})
    p = res.x if np.isfinite(res.fun) and res.fun < 1e11 else x0
    return float(p[0]), float(p[1]), float(p[2]), float(p[3])


# ---------------------------------------------------------------------------
# Archive

@dataclass
class PosteriorArchive:
    columns: list
    samples: np.ndarray            # [record x column]
    trace_iterations: np.ndarray
    trace_logpost: np.ndarray
    acceptance: dict               # block name -> final rate
    meta: dict

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.columns.index(name)]

    def columns_like(self, prefix: str) -> list:
        return [c for c in self.columns if c.startswith(prefix)]

    def save(self, outdir):
        import os
        os.makedirs(outdir, exist_ok=True)
        import pandas as pd
        pd.DataFrame(self.samples, columns=self.columns).to_csv(
            f"{outdir}/samples.csv", index=False)
        tr = pd.DataFrame({"iteration": self.trace_iterations,
                           "log_posterior": self.trace_logpost})
        for name, rate in self.acceptance.items():
            tr[f"acc_{name}"] = rate
        tr.to_csv(f"{outdir}/trace.csv", index=False)
        with open(f"{outdir}/meta.json", "w") as fh:
            json.dump(self.meta, fh, indent=2, default=str)

    @classmethod
    def load(cls, outdir):
        import pandas as pd
        df = pd.read_csv(f"{outdir}/samples.csv")
        tr = pd.read_csv(f"{outdir}/trace.csv")
        with open(f"{outdir}/meta.json") as fh:
            meta = json.load(fh)
        acc = {c[4:]: float(tr[c].iloc[-1]) for c in tr.columns
               if c.startswith("acc_")}
        return cls(columns=list(df.columns), samples=df.to_numpy(float),
                   trace_iterations=tr["iteration"].to_numpy(int),
                   trace_logpost=tr["log_posterior"].to_numpy(float),
                   acceptance=acc, meta=meta)


def _archive_columns(sampler: Sampler) -> list:
    spec, ds = sampler.spec, sampler.dataset
    cols = []
    if spec.spatial_coefficients:
        for name in COEF_NAMES:
            cols += [f"beta_{name}_{i:03d}" for i in range(sampler.n_columns)]
        cols += [f"sigma_beta_{name}" for name in COEF_NAMES]
    else:
        for name in (COEF_NAMES[i] for i in spec.active_coefficients):
            cols += [f"coef_{name}_{sid}" for sid in ds.station_ids]
    if spec.data_level_copula:
        cols += ["delta", "tau2", "rho", "nu"]
        cols += [f"r_{y}" for y in ds.years]
        cols += [f"wbar_{y}" for y in ds.years]
    return cols


def _record(sampler: Sampler, state: ChainState) -> np.ndarray:
    spec = sampler.spec
    parts = []
    if spec.spatial_coefficients:
        parts.append(state.weights.ravel())
        parts.append(state.sigma_beta)
    else:
        active = list(spec.active_coefficients)
        parts.append(state.coefs[:, active].T.ravel())
    if spec.data_level_copula:
        d = state.dep
        parts.append(np.array([d.delta, d.tau2, d.rho, d.nu]))
        parts.append(state.r)
        parts.append(state.w.mean(axis=1))
    return np.concatenate(parts)


def data_hash(dataset: StationDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.maxima).tobytes())
    h.update(",".join(dataset.station_ids).encode())
    return h.hexdigest()[:16]


def run_chain(dataset: StationDataset, covariates: CovariateBundle,
              spec: ModelSpec, cfg: McmcConfig,
              basis: BasisSystem | None = None,
              progress: bool = False) -> PosteriorArchive:
    """Run one chain: per iteration, all coefficient blocks, then the
    hyperparameter scales, then dependence, then latents. Adaptation runs
    during burn-in only; post-burn-in states are archived every `thin`."""
    sampler = Sampler(dataset, covariates, spec, cfg, basis=basis)
    state = sampler.initial_state()
    lp0 = sampler.log_posterior(state)
    columns = _archive_columns(sampler)
    meta = {
        "variant": spec.variant,
        "seed": cfg.seed,
        "n_iter": cfg.n_iter, "n_burn": cfg.n_burn, "thin": cfg.thin,
        "n_splines": sampler.n_splines if spec.spatial_coefficients else 0,
        "basis_seed": spec.basis_seed,
        "data_hash": data_hash(dataset),
        "station_ids": dataset.station_ids,
        "years": dataset.years.tolist(),
        "schema_version": 1,
        "complete": False,
    }
    if not np.isfinite(lp0):
        meta["error"] = "non-finite log posterior at initialization"
        return PosteriorArchive(columns=columns,
                                samples=np.zeros((0, len(columns))),
                                trace_iterations=np.zeros(0, int),
                                trace_logpost=np.zeros(0),
                                acceptance={}, meta=meta)

    records = np.empty((cfg.n_records, len(columns)))
    trace_it, trace_lp = [], []
    n_rec = 0
    for it in range(cfg.n_iter):
        sampler.update_coefficients(state)
        sampler.update_sigma_beta(state)
        sampler.update_dependence(state)
        sampler.update_latents(state)
        if it < cfg.n_burn:
            if (it + 1) % cfg.adapt_interval == 0:
                sampler.adapt_all(update_cov=(it + 1) <= cfg.n_burn // 2)
            if it + 1 == cfg.n_burn:
                sampler.freeze_adaptation()
        else:
            k = it - cfg.n_burn
            if k % cfg.thin == 0 and n_rec < cfg.n_records:
                records[n_rec] = _record(sampler, state)
                n_rec += 1
                trace_it.append(it)
                trace_lp.append(sampler.log_posterior(state))
        if progress and (it + 1) % max(cfg.n_iter // 20, 1) == 0:
            print(f"  iter {it + 1}/{cfg.n_iter}", flush=True)

    meta["complete"] = True
    return PosteriorArchive(columns=columns, samples=records[:n_rec],
                            trace_iterations=np.asarray(trace_it, int),
                            trace_logpost=np.asarray(trace_lp),
                            acceptance=sampler.acceptance_rates(), meta=meta)
