"""Ground-truth synthetic data generator.

Samples station layouts, spatial covariate surfaces, climate drivers,
coefficient fields, latent dependence states, and annual maxima from the
exact generative model of each variant. Everything that would be needed to
verify recovery is returned in a truth record and can be persisted as
truth.json alongside the standard CSV schemas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .basis import build_basis, effective_n_splines
from .data_model import (
    SPATIAL_COVARIATE_NAMES,
    CovariateBundle,
    Station,
    StationDataset,
)
from .gev import gev_quantile_arrays
from .inference import COEF_NAMES, M1_ACTIVE, ModelSpec
from .scale_mixture import (
    DependenceParams,
    cholesky_with_jitter,
    gaussian_to_pareto,
    matern_matrix,
    sample_r,
)
from .transform import MarginalTable


@dataclass
class TruthRecord:
    """Everything the generator drew, for recovery checks."""
    variant: str
    coefs: np.ndarray                       # [station x 9]
    dep: DependenceParams | None = None
    r: np.ndarray | None = None             # [year]
    w: np.ndarray | None = None             # [year x station]
    weights: np.ndarray | None = None       # [9 x column], spatial variants
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def to_json(self, path):
        doc = {
            "variant": self.variant,
            "seed": self.seed,
            "coefs": self.coefs.tolist(),
            "coef_names": list(COEF_NAMES),
        }
        if self.dep is not None:
            doc["dependence"] = {"delta": self.dep.delta, "tau2": self.dep.tau2,
                                 "rho": self.dep.rho, "nu": self.dep.nu}
            doc["r"] = self.r.tolist()
            doc["w"] = self.w.tolist()
        if self.weights is not None:
            doc["weights"] = self.weights.tolist()
        doc.update(self.extras)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)


DEFAULT_COEFS = {
    # plausible magnitudes for summertime temperature maxima (deg C)
    "mu0": 35.0, "mu1": 1.5, "mu2": -0.8, "mu3": 0.6, "mu4": 0.5,
    "sig0": 0.3, "sig1": 0.15, "sig2": 0.05, "xi": -0.2,
}


def _smooth_field(coords, rng, rho=2.0, sd=1.0):
    """One draw of a smooth Gaussian random surface over the stations."""
    c = matern_matrix(coords, rho=rho, nu=1.5)
    return sd * (cholesky_with_jitter(c) @ rng.standard_normal(len(coords)))


def _make_stations(n_stations, rng, box=((-124.0, -116.0), (42.0, 50.0))):
    (lon0, lon1), (lat0, lat1) = box
    lon = rng.uniform(lon0, lon1, n_stations)
    lat = rng.uniform(lat0, lat1, n_stations)
    coords = np.column_stack([lon, lat])
    topo = {
        "log_precip": 6.5 + _smooth_field(coords, rng, sd=0.4),
        "elevation": np.exp(5.0 + _smooth_field(coords, rng, sd=0.8)),
        "slope": np.abs(_smooth_field(coords, rng, sd=2.0)),
        "aspect": rng.uniform(0.0, 2 * np.pi, n_stations),
        "dist_coast": np.abs(lon - lon0) * 80.0
        + np.abs(_smooth_field(coords, rng, sd=15.0)),
    }
    stations = []
    for j in range(n_stations):
        cov = np.array([topo[k][j] for k in SPATIAL_COVARIATE_NAMES])
        stations.append(Station(id=f"S{j:03d}", lon=float(lon[j]),
                                lat=float(lat[j]), spatial_covariates=cov))
    return stations, coords


def _ar1(n, rng, phi=0.7, sd=1.0):
    x = np.empty(n)
    x[0] = rng.normal(0.0, sd / np.sqrt(1 - phi ** 2))
    for i in range(1, n):
        x[i] = phi * x[i - 1] + rng.normal(0.0, sd * np.sqrt(1 - phi ** 2))
    return x


def _make_covariates(years, coords, rng):
    n_years, n_stations = len(years), len(coords)
    t = np.linspace(0.0, 1.0, n_years)
    ghg = -1.0 + 2.5 * t + 0.1 * _ar1(n_years, rng, phi=0.5)
    eli = _ar1(n_years, rng, phi=0.6)
    base = _smooth_field(coords, rng, rho=3.0)
    pdsi = (0.8 * _ar1(n_years, rng, phi=0.5)[:, None]
            + 0.6 * base[None, :]
            + 0.5 * rng.standard_normal((n_years, n_stations)))
    onset = rng.integers(0, n_years + 1, n_stations)
    urban = (np.arange(n_years)[:, None] >= onset[None, :]).astype(float)
    urban[:, rng.uniform(size=n_stations) < 0.6] = 0.0  # most sites rural
    return CovariateBundle(years=np.asarray(years), ghg=ghg, eli=eli,
                           pdsi=pdsi, urban=urban)


def _truth_coefs(spec, stations, coords, rng, truth):
    n = len(coords)
    coefs = np.zeros((n, 9))
    weights = None
    if spec.spatial_coefficients:
        n_splines = effective_n_splines(spec.n_splines, n)
        basis = build_basis(stations, n_splines, seed=spec.basis_seed)
        weights = np.zeros((9, basis.n_columns))
        for g, name in enumerate(COEF_NAMES):
            weights[g, 0] = DEFAULT_COEFS[name]
            amp = 0.1 * max(abs(DEFAULT_COEFS[name]), 0.2)
            weights[g, 1:1 + n_splines] = amp * rng.standard_normal(n_splines)
        coefs = basis.design @ weights.T
    else:
        active = M1_ACTIVE if spec.variant == "M1" else range(9)
        for g in active:
            name = COEF_NAMES[g]
            wiggle = 0.1 * max(abs(DEFAULT_COEFS[name]), 0.2)
            coefs[:, g] = DEFAULT_COEFS[name] + \
                wiggle * _smooth_field(coords, rng, rho=3.0)
    if truth is not None:
        if "coefs" in truth:
            coefs = np.asarray(truth["coefs"], dtype=float)
        for name, value in truth.items():
            if name in COEF_NAMES:
                coefs[:, COEF_NAMES.index(name)] = value
    coefs[:, 8] = np.clip(coefs[:, 8], -0.95, 0.95)
    return coefs, weights


def generate(spec: ModelSpec, n_stations: int, n_years: int,
             truth: dict | None = None, seed: int = 0,
             first_year: int = 1950, missing_rate: float = 0.0):
    """Draw one complete synthetic analysis problem.

    `truth` may pin coefficient values by name ("mu1": 1.2), a full [n x 9]
    "coefs" matrix, or dependence parameters ("delta", "tau2", "rho", "nu").
    `missing_rate` masks cells at random while keeping every station above
    the ten-observation floor.
    """
    if n_stations < 1 or n_years < 1:
        raise ValueError("n_stations and n_years must be positive")
    rng = np.random.default_rng(seed)
    years = np.arange(first_year, first_year + n_years)
    stations, coords = _make_stations(n_stations, rng)
    cov = _make_covariates(years, coords, rng)
    coefs, weights = _truth_coefs(spec, stations, coords, rng, truth)

    # cellwise GEV parameters
    c = coefs[None, :, :]
    mu = (c[..., 0] + c[..., 1] * cov.ghg[:, None]
          + c[..., 2] * cov.pdsi + c[..., 3] * cov.eli[:, None]
          + c[..., 4] * cov.urban)
    logsig = c[..., 5] + c[..., 6] * cov.ghg[:, None] + c[..., 7] * cov.eli[:, None]
    xi = np.broadcast_to(coefs[:, 8][None, :], mu.shape)

    record = TruthRecord(variant=spec.variant, coefs=coefs, weights=weights,
                         seed=seed)
    if spec.data_level_copula:
        t = truth or {}
        dep = DependenceParams(delta=t.get("delta", 0.4),
                               tau2=t.get("tau2", 1.0),
                               rho=t.get("rho", 2.0), nu=t.get("nu", 1.0))
        chol = cholesky_with_jitter(matern_matrix(coords, dep.rho, dep.nu))
        z = rng.standard_normal((n_years, n_stations)) @ chol.T
        w = gaussian_to_pareto(z)
        r = sample_r(dep.alpha, rng, size=n_years)
        x = r[:, None] * w + np.sqrt(dep.tau2) * \
            rng.standard_normal((n_years, n_stations))
        table = MarginalTable(dep.delta, dep.tau2)
        u = table.cdf(x.ravel()).reshape(x.shape)
        y = gev_quantile_arrays(u, mu, np.exp(logsig), xi)
        record.dep, record.r, record.w = dep, r, w
        record.extras["z"] = z.tolist()
    else:
        u = rng.uniform(size=mu.shape)
        y = gev_quantile_arrays(u, mu, np.exp(logsig), xi)

    if missing_rate > 0.0:
        mask = rng.uniform(size=y.shape) < missing_rate
        # never push a station below the coverage floor
        for j in range(n_stations):
            keep = np.nonzero(~mask[:, j])[0]
            if keep.size < 10:
                need = 10 - keep.size
                masked = np.nonzero(mask[:, j])[0]
                mask[rng.choice(masked, need, replace=False), j] = False
        y = np.where(mask, np.nan, y)

    dataset = StationDataset(stations=tuple(stations), years=years, maxima=y)
    return dataset, cov, record
