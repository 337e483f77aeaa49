"""Empirical tail-dependence estimation with bootstrap envelopes, plus
chain-quality diagnostics (effective sample size, split R-hat, acceptance
tables)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .inference import PosteriorArchive

DEFAULT_U_GRID = np.linspace(0.5, 0.99, 50)
DEFAULT_TOLERANCE = 0.002
N_BOOT = 500


@dataclass(frozen=True)
class ChiEstimate:
    h: float
    tolerance: float
    u_grid: np.ndarray
    chi: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_pairs: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"h": self.h, "u": self.u_grid,
                             "chi": self.chi, "ci_lower": self.ci_lower,
                             "ci_upper": self.ci_upper,
                             "n_pairs": self.n_pairs})


def to_uniform_ranks(data: np.ndarray) -> np.ndarray:
    """Columnwise rank transform to (0,1), NaN-aware (missing stays NaN).
    Ranks use the n+1 denominator so no value maps to exactly 1."""
    out = np.full(data.shape, np.nan)
    for j in range(data.shape[1]):
        col = data[:, j]
        ok = np.isfinite(col)
        n = ok.sum()
        if n:
            ranks = np.empty(n)
            order = np.argsort(col[ok], kind="stable")
            ranks[order] = np.arange(1, n + 1)
            out[ok, j] = ranks / (n + 1.0)
    return out


def _pairs_at_distance(coords: np.ndarray, h: float, tolerance: float):
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    i, j = np.nonzero(np.triu(np.abs(d - h) <= tolerance, k=1))
    return i, j


def _chi_curve(u_grid, ui, uj):
    """Conditional exceedance ratio over pooled pair observations,
    symmetrized in the two columns."""
    exceed_i = ui[:, None] > u_grid[None, :]
    exceed_j = uj[:, None] > u_grid[None, :]
    joint = (exceed_i & exceed_j).sum(axis=0)
    denom = exceed_i.sum(axis=0) + exceed_j.sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(denom > 0, 2.0 * joint / denom, np.nan)


def chi_empirical(data: np.ndarray, coords: np.ndarray, h: float,
                  tolerance: float = DEFAULT_TOLERANCE,
                  u_grid: np.ndarray = None, rank_transform: bool = True,
                  n_boot: int = N_BOOT, seed: int = 0) -> ChiEstimate:
    """Empirical chi_h(u) pooled over station pairs at separation h.

    `data` is [year x station]; when rank_transform is False it must
    already carry uniform margins. The 95% envelope comes from a bootstrap
    over years (year blocks respect the replication structure; pairs share
    years and are not independent).
    """
    u_grid = DEFAULT_U_GRID if u_grid is None else np.asarray(u_grid, float)
    if np.any((u_grid <= 0) | (u_grid >= 1)):
        raise ValueError("u_grid must lie in (0, 1)")
    unif = to_uniform_ranks(data) if rank_transform else np.asarray(data, float)
    i, j = _pairs_at_distance(coords, h, tolerance)
    if i.size == 0:
        raise ValueError(f"no station pairs within {tolerance} of h={h}")

    ui_mat = unif[:, i]     # [year x pair]
    uj_mat = unif[:, j]
    ok = np.isfinite(ui_mat) & np.isfinite(uj_mat)

    def curve(year_idx):
        sel_i = ui_mat[year_idx].ravel()
        sel_j = uj_mat[year_idx].ravel()
        keep = ok[year_idx].ravel()
        return _chi_curve(u_grid, sel_i[keep], sel_j[keep])

    n_years = data.shape[0]
    chi = curve(np.arange(n_years))
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, u_grid.size))
    for b in range(n_boot):
        boots[b] = curve(rng.integers(0, n_years, n_years))
    lo, hi = np.nanpercentile(boots, [2.5, 97.5], axis=0)
    return ChiEstimate(h=h, tolerance=tolerance, u_grid=u_grid,
                       chi=np.clip(chi, 0.0, 1.0),
                       ci_lower=np.clip(lo, 0.0, 1.0),
                       ci_upper=np.clip(hi, 0.0, 1.0), n_pairs=int(i.size))


# ---------------------------------------------------------------------------
# Chain diagnostics

def effective_sample_size(x: np.ndarray) -> float:
    """Initial-positive-sequence autocorrelation estimator of ESS for one
    scalar chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    acf = np.correlate(x, x, mode="full")[n - 1:] / (np.arange(n, 0, -1))
    acf = acf / acf[0]
    # sum consecutive pairs until a pair sum goes nonpositive
    s = 0.0
    for k in range(1, n // 2):
        pair = acf[2 * k - 1] + acf[2 * k]
        if pair <= 0:
            break
        s += pair
    ess = n / (1.0 + 2.0 * s)
    return float(np.clip(ess, 1.0, n))


def split_rhat(chains: np.ndarray) -> float:
    """Split R-hat over [chain x draw] for one scalar."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    half = n // 2
    splits = np.concatenate([chains[:, :half], chains[:, half:2 * half]],
                            axis=0)
    k, n2 = splits.shape
    means = splits.mean(axis=1)
    w = splits.var(axis=1, ddof=1).mean()
    b = n2 * means.var(ddof=1)
    if w == 0:
        return 1.0
    var_plus = (n2 - 1) / n2 * w + b / n2
    return float(np.sqrt(var_plus / w))


def chain_diagnostics(archives: list) -> dict:
    """Summaries over one or more chains of the same model: per-column ESS
    (pooled), split R-hat when >= 2 chains, per-block acceptance rates."""
    if isinstance(archives, PosteriorArchive):
        archives = [archives]
    cols = archives[0].columns
    report = {"columns": cols, "n_chains": len(archives), "ess": {},
              "rhat": {}, "acceptance": [a.acceptance for a in archives]}
    n_common = min(a.samples.shape[0] for a in archives)
    for c in cols:
        series = [a.column(c)[:n_common] for a in archives]
        report["ess"][c] = float(sum(effective_sample_size(s)
                                     for s in series))
        if len(archives) >= 2 and n_common >= 4:
            report["rhat"][c] = split_rhat(np.asarray(series))
        else:
            report["rhat"][c] = None
    lp = [a.trace_logpost[:n_common] for a in archives]
    report["log_posterior_ess"] = float(sum(effective_sample_size(s)
                                            for s in lp))
    return report


def diagnostics_frame(report: dict) -> pd.DataFrame:
    return pd.DataFrame({
        "column": report["columns"],
        "ess": [report["ess"][c] for c in report["columns"]],
        "rhat": [report["rhat"][c] for c in report["columns"]],
    })
