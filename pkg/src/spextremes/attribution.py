"""Scenario construction and posterior attribution functionals.

Works off an immutable PosteriorArchive: per-station upper bounds and risk
probabilities under factual/counterfactual driver scenarios, risk ratios
with infinite/undefined sentinels, exceedance summaries, and max-effect
maps (posterior-median coefficient times the driver's observed range).

Summary order matters for nonlinear functionals: everything is computed
per posterior draw first and summarized afterwards, with infinite and
undefined risk-ratio draws reported as categorical masses next to the
quantiles of the finite part.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .basis import build_basis
from .data_model import CovariateBundle, StationDataset
from .gev import XI_TOL
from .inference import COEF_NAMES, PosteriorArchive

DRIVERS = ("GHG", "PDSI", "ELI", "Urban")

RR_INFINITE = np.inf      # zero counterfactual risk, nonzero factual
RR_UNDEFINED = np.nan     # both risks zero in the draw


@dataclass(frozen=True)
class Scenario:
    """Driver settings: each entry is a literal float or {"year": y} to use
    that year's value from the covariate bundle."""
    name: str
    driver_values: dict

    def __post_init__(self):
        if set(self.driver_values) != set(DRIVERS):
            raise ValueError("scenario must resolve every driver exactly "
                             f"once; expected {DRIVERS}")


def factual_counterfactual(event_year: int = 2021,
                           baseline_year: int = 1950):
    """The standard scenario pair: everything at the event year versus GHG
    rolled back to the baseline year."""
    at = lambda y: {"year": y}
    factual = Scenario("factual", {d: at(event_year) for d in DRIVERS})
    counter = Scenario("counterfactual",
                       {"GHG": at(baseline_year), "PDSI": at(event_year),
                        "ELI": at(event_year), "Urban": at(event_year)})
    return factual, counter


def resolve_scenario(scenario: Scenario, covariates: CovariateBundle,
                     n_stations: int) -> dict:
    """Materialize driver values: scalars for GHG/ELI, per-station arrays
    for PDSI/Urban."""
    out = {}
    for name, setting in scenario.driver_values.items():
        if isinstance(setting, dict):
            idx = covariates.year_index(setting["year"])
            if name == "GHG":
                out[name] = float(covariates.ghg[idx])
            elif name == "ELI":
                out[name] = float(covariates.eli[idx])
            elif name == "PDSI":
                out[name] = covariates.pdsi[idx].copy()
            else:
                out[name] = covariates.urban[idx].copy()
        else:
            val = float(setting)
            out[name] = val if name in ("GHG", "ELI") \
                else np.full(n_stations, val)
    return out


def scenario_params(coefs: np.ndarray, resolved: dict):
    """GEV parameters per station for one posterior draw of the
    coefficient fields under the resolved scenario.

    coefs is [station x 9]; returns (mu, sigma, xi) arrays.
    """
    mu = (coefs[:, 0] + coefs[:, 1] * resolved["GHG"]
          + coefs[:, 2] * resolved["PDSI"] + coefs[:, 3] * resolved["ELI"]
          + coefs[:, 4] * resolved["Urban"])
    sigma = np.exp(coefs[:, 5] + coefs[:, 6] * resolved["GHG"]
                   + coefs[:, 7] * resolved["ELI"])
    return mu, sigma, coefs[:, 8]


def upper_bounds(mu, sigma, xi):
    """b = mu - sigma/xi for xi < 0, +inf otherwise (vectorized)."""
    neg = xi < -XI_TOL
    out = np.full_like(mu, np.inf)
    out[neg] = mu[neg] - sigma[neg] / xi[neg]
    return out


def risk_probabilities(u, mu, sigma, xi):
    """P(Y > u) per station; exactly zero at or above the upper bound."""
    u, mu, sigma, xi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (u, mu, sigma, xi)))
    s = (u - mu) / sigma
    t = np.empty_like(s)
    gumbel = np.abs(xi) < XI_TOL
    t[gumbel] = np.exp(-s[gumbel])
    ng = ~gumbel
    w = 1.0 + xi[ng] * s[ng]
    tn = np.zeros_like(w)
    pos = w > 0.0
    tn[pos] = w[pos] ** (-1.0 / xi[ng][pos])
    tn[(~pos) & (xi[ng] > 0.0)] = np.inf   # below the lower bound
    t[ng] = tn
    p = -np.expm1(-t)
    # p = 0 exactly iff u is at/above the upper bound: keep strictly
    # in-support probabilities positive even where w^(-1/xi) underflows
    in_support = np.empty_like(p, dtype=bool)
    in_support[gumbel] = True
    in_support[ng] = pos | (xi[ng] > 0.0)
    p[in_support] = np.maximum(p[in_support], np.finfo(float).tiny)
    return p


def risk_ratio(p_f: float, p_c: float) -> float:
    """Extended-real risk ratio with sentinels: +inf when the
    counterfactual risk is zero but the factual is not, NaN (undefined)
    when both are zero."""
    if not (0.0 <= p_f <= 1.0 and 0.0 <= p_c <= 1.0):
        raise ValueError("risk probabilities must lie in [0, 1]")
    if p_c > 0.0:
        return p_f / p_c
    return RR_UNDEFINED if p_f == 0.0 else RR_INFINITE


# ---------------------------------------------------------------------------
# Archive-level machinery

def coefficient_draws(archive: PosteriorArchive,
                      dataset: StationDataset) -> np.ndarray:
    """Per-draw station-level coefficient fields [draw x station x 9],
    reconstructed from the archive columns (basis weights for the spatial
    variants, direct per-station columns otherwise)."""
    n = len(dataset.stations)
    m = archive.samples.shape[0]
    if archive.meta.get("n_splines", 0) or \
            any(c.startswith("beta_") for c in archive.columns):
        basis = build_basis(list(dataset.stations),
                            archive.meta["n_splines"],
                            seed=archive.meta.get("basis_seed", 0))
        out = np.empty((m, n, 9))
        for g, name in enumerate(COEF_NAMES):
            cols = archive.columns_like(f"beta_{name}_")
            w = archive.samples[:, [archive.columns.index(c) for c in cols]]
            out[:, :, g] = w @ basis.design.T
        return out
    out = np.zeros((m, n, 9))
    for g, name in enumerate(COEF_NAMES):
        cols = archive.columns_like(f"coef_{name}_")
        if not cols:
            continue
        idx = [archive.columns.index(c) for c in cols]
        out[:, :, g] = archive.samples[:, idx]
    return out


@dataclass
class AttributionSummary:
    """Per-station posterior summaries under a scenario pair."""
    station_ids: list
    scenario_names: tuple
    bounds: dict          # scenario -> [draw x station]
    risks: dict           # scenario -> [draw x station]
    rr: np.ndarray        # [draw x station], with sentinels
    flags: dict = field(default_factory=dict)

    @property
    def rr_infinite_mass(self):
        return np.mean(np.isinf(self.rr), axis=0)

    @property
    def rr_undefined_mass(self):
        return np.mean(np.isnan(self.rr), axis=0)

    def rr_quantiles(self, qs=(0.025, 0.5, 0.975)):
        """Type-7 quantiles of RR treating +inf draws as larger than any
        finite value; NaN (undefined) draws are excluded."""
        out = np.full((len(qs), self.rr.shape[1]), np.nan)
        for j in range(self.rr.shape[1]):
            col = self.rr[:, j]
            col = col[~np.isnan(col)]
            if col.size:
                out[:, j] = np.quantile(col, qs)
        return out

    def rr_significant(self) -> np.ndarray:
        """True where the equal-tailed 95% interval of RR excludes 1."""
        q = self.rr_quantiles((0.025, 0.975))
        return (q[0] > 1.0) | (q[1] < 1.0)


def attribution_summary(archive: PosteriorArchive, dataset: StationDataset,
                        covariates: CovariateBundle,
                        scenarios: tuple | None = None,
                        thresholds: np.ndarray | None = None):
    """Compute per-draw bounds, risks, and risk ratios for a scenario pair
    (default: factual vs counterfactual at 2021/1950). `thresholds` are the
    per-station event values u(s); default is the dataset's last year."""
    if scenarios is None:
        scenarios = factual_counterfactual(
            event_year=int(dataset.years[-1]),
            baseline_year=int(dataset.years[0]))
    if thresholds is None:
        thresholds = dataset.maxima[-1]
    n = len(dataset.stations)
    coefs = coefficient_draws(archive, dataset)
    m = coefs.shape[0]
    bounds = {s.name: np.empty((m, n)) for s in scenarios}
    risks = {s.name: np.empty((m, n)) for s in scenarios}
    resolved = {s.name: resolve_scenario(s, covariates, n) for s in scenarios}
    for k in range(m):
        for s in scenarios:
            mu, sigma, xi = scenario_params(coefs[k], resolved[s.name])
            bounds[s.name][k] = upper_bounds(mu, sigma, xi)
            risks[s.name][k] = risk_probabilities(thresholds, mu, sigma, xi)
    f, c = scenarios[0].name, scenarios[1].name
    pf, pc = risks[f], risks[c]
    rr = np.where(pc > 0.0, pf / np.where(pc > 0.0, pc, 1.0),
                  np.where(pf > 0.0, np.inf, np.nan))
    return AttributionSummary(
        station_ids=list(dataset.station_ids),
        scenario_names=(f, c), bounds=bounds, risks=risks, rr=rr,
        flags={"thresholds": thresholds})


def exceedance_table(summary: AttributionSummary,
                     thresholds: np.ndarray) -> dict:
    """Fractions over stations, per scenario: threshold above the
    posterior-median upper bound; infinite median bound; and whether the
    upper limit of the 95% interval of the bound covers the threshold."""
    out = {}
    for name, b in summary.bounds.items():
        med = np.quantile(b, 0.5, axis=0)
        hi = np.quantile(b, 0.975, axis=0)
        valid = np.isfinite(thresholds)
        out[name] = {
            "frac_exceeding_median_bound":
                float(np.mean(thresholds[valid] > med[valid])),
            "frac_infinite_bound": float(np.mean(np.isinf(med))),
            "coverage_upper_ci":
                float(np.mean(thresholds[valid] <= hi[valid])),
            "exceeds_median_bound": (thresholds > med).tolist(),
        }
    return out


def max_effect_map(archive: PosteriorArchive, dataset: StationDataset,
                   covariates: CovariateBundle, driver: str) -> np.ndarray:
    """Posterior-median coefficient times the driver's observed range,
    per station (degrees). PDSI uses its station-specific range; Urban
    multiplies by one."""
    if driver not in DRIVERS:
        raise ValueError(f"driver must be one of {DRIVERS}")
    coefs = coefficient_draws(archive, dataset)
    g = {"GHG": 1, "PDSI": 2, "ELI": 3, "Urban": 4}[driver]
    med = np.quantile(coefs[:, :, g], 0.5, axis=0)
    idx = [covariates.year_index(y) for y in dataset.years]
    if driver == "GHG":
        v = covariates.ghg[idx]
        rng = float(v.max() - v.min())
        return med * rng
    if driver == "ELI":
        v = covariates.eli[idx]
        return med * float(v.max() - v.min())
    if driver == "Urban":
        return med * 1.0
    v = covariates.pdsi[idx]
    return med * (v.max(axis=0) - v.min(axis=0))


# ---------------------------------------------------------------------------
# CSV export

def export_attribution(outdir, summary: AttributionSummary,
                       archive: PosteriorArchive, dataset: StationDataset,
                       covariates: CovariateBundle, variant: str):
    """Write upper_bounds.csv, risk.csv, risk_ratio.csv, max_effect.csv
    and the plotdata/ directory."""
    os.makedirs(outdir, exist_ok=True)
    plotdir = os.path.join(outdir, "plotdata")
    os.makedirs(plotdir, exist_ok=True)
    thresholds = np.asarray(summary.flags["thresholds"], dtype=float)
    exc = exceedance_table(summary, thresholds)

    rows = []
    for name, b in summary.bounds.items():
        q = np.quantile(b, [0.025, 0.5, 0.975], axis=0)
        flags = exc[name]["exceeds_median_bound"]
        for j, sid in enumerate(summary.station_ids):
            rows.append({"station": sid, "scenario": name,
                         "variant": variant, "q025": q[0, j],
                         "q50": q[1, j], "q975": q[2, j],
                         "exceeded_flag": bool(flags[j])})
    pd.DataFrame(rows).to_csv(os.path.join(outdir, "upper_bounds.csv"),
                              index=False)

    rows = []
    for name, p in summary.risks.items():
        q = np.quantile(p, [0.025, 0.5, 0.975], axis=0)
        zero = np.mean(p == 0.0, axis=0)
        for j, sid in enumerate(summary.station_ids):
            rows.append({"station": sid, "scenario": name,
                         "variant": variant, "q025": q[0, j],
                         "q50": q[1, j], "q975": q[2, j],
                         "zero_mass": zero[j]})
    pd.DataFrame(rows).to_csv(os.path.join(outdir, "risk.csv"), index=False)

    q = summary.rr_quantiles()
    sig = summary.rr_significant()
    rows = []
    for j, sid in enumerate(summary.station_ids):
        rows.append({"station": sid, "variant": variant,
                     "q025": q[0, j], "q50": q[1, j], "q975": q[2, j],
                     "rr_infinite_mass": summary.rr_infinite_mass[j],
                     "rr_undefined_mass": summary.rr_undefined_mass[j],
                     "significant": bool(sig[j])})
    pd.DataFrame(rows).to_csv(os.path.join(outdir, "risk_ratio.csv"),
                              index=False)

    rows = []
    for driver in DRIVERS:
        eff = max_effect_map(archive, dataset, covariates, driver)
        for j, sid in enumerate(summary.station_ids):
            rows.append({"station": sid, "variant": variant,
                         "driver": driver, "max_effect": eff[j]})
    pd.DataFrame(rows).to_csv(os.path.join(outdir, "max_effect.csv"),
                              index=False)

    coords = dataset.coords()
    pd.DataFrame({"station": summary.station_ids,
                  "lon": coords[:, 0], "lat": coords[:, 1],
                  "rr_q50": q[1], "rr_significant": sig}).to_csv(
        os.path.join(plotdir, "rr_map.csv"), index=False)
    rows = []
    for name in summary.scenario_names:
        med = np.quantile(summary.bounds[name], 0.5, axis=0)
        rows.append(pd.DataFrame({"station": summary.station_ids,
                                  "scenario": name, "bound_q50": med,
                                  "threshold": thresholds}))
    pd.concat(rows).to_csv(os.path.join(plotdir, "bounds_map.csv"),
                           index=False)
