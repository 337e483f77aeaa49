"""Thin-plate-spline plus topography basis for the GEV coefficient
surfaces, and penalized least squares on that basis (used both for field
initialization and for interpolating the event-year temperature surface).

Construction: radial kernel r^2 log r on planar lon/lat, knots picked by a
seeded farthest-point subsample of the stations, spline columns
orthogonalized against [1, lon, lat] and scaled to unit standard deviation
over the build stations; topographic columns are standardized. All affine
maps are recorded so off-station targets are expanded identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data_model import Station
from .gev import GevCoefficients

COEF_NAMES = GevCoefficients.NAMES


def tps_kernel(r):
    """r^2 log r, continuously extended to 0 at r = 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = r > 0
    out[m] = r[m] ** 2 * np.log(r[m])
    return out


def farthest_point_knots(coords: np.ndarray, n_knots: int,
                         seed: int) -> np.ndarray:
    """Space-filling subsample: seeded random start, then greedy
    farthest-point selection. Returns knot indices."""
    n = coords.shape[0]
    if n_knots > n:
        raise ValueError(f"cannot place {n_knots} knots on {n} stations")
    rng = np.random.default_rng(seed)
    idx = [int(rng.integers(n))]
    d = np.linalg.norm(coords - coords[idx[0]], axis=1)
    for _ in range(n_knots - 1):
        nxt = int(np.argmax(d))
        idx.append(nxt)
        d = np.minimum(d, np.linalg.norm(coords - coords[nxt], axis=1))
    return np.array(sorted(idx))


@dataclass
class BasisSystem:
    knots: np.ndarray            # [n_splines x 2] lon/lat
    n_splines: int
    design: np.ndarray           # [station x (1 + n_splines + 5)]
    condition_number: float
    # recorded affine maps for target evaluation
    _proj: np.ndarray            # [3 x n_splines], lstsq coefs onto [1, lon, lat]
    _spline_scale: np.ndarray    # [n_splines]
    _topo_mean: np.ndarray       # [5]
    _topo_scale: np.ndarray      # [5]

    @property
    def n_columns(self) -> int:
        return self.design.shape[1]

    def design_at(self, coords: np.ndarray, topo: np.ndarray) -> np.ndarray:
        """Expand arbitrary targets with the recorded maps."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        topo = np.atleast_2d(np.asarray(topo, dtype=float))
        if topo.shape[1] != 5:
            raise ValueError(f"expected 5 spatial covariates, got {topo.shape[1]}")
        n = coords.shape[0]
        cols = [np.ones((n, 1))]
        if self.n_splines:
            r = np.linalg.norm(coords[:, None, :] - self.knots[None, :, :],
                               axis=2)
            raw = tps_kernel(r)
            poly = np.column_stack([np.ones(n), coords])
            ortho = raw - poly @ self._proj
            cols.append(ortho / self._spline_scale)
        cols.append((topo - self._topo_mean) / self._topo_scale)
        return np.hstack(cols)


def effective_n_splines(requested: int, n_stations: int) -> int:
    """Clamp the spline count for small networks: knots are a subsample of
    the stations and a margin is kept so the design stays well conditioned."""
    return min(requested, max(n_stations - 6, 1))


def build_basis(stations, n_splines: int, seed: int = 0) -> BasisSystem:
    """Build the regularized design over the stations.

    `stations` is a list of Station or a (coords [n x 2], topo [n x 5]) pair.
    """
    if isinstance(stations, tuple):
        coords, topo = (np.asarray(a, dtype=float) for a in stations)
    else:
        coords = np.array([[s.lon, s.lat] for s in stations])
        topo = np.array([s.spatial_covariates for s in stations])
    n = coords.shape[0]
    if n_splines > max(n - 1, 0):
        raise ValueError(f"n_splines={n_splines} exceeds n_stations-1={n - 1}")

    if n_splines:
        knot_idx = farthest_point_knots(coords, n_splines, seed)
        knots = coords[knot_idx]
        d = np.linalg.norm(knots[:, None, :] - knots[None, :, :], axis=2)
        if np.any(d[~np.eye(n_splines, dtype=bool)] == 0):
            raise ValueError("coincident knots")
        r = np.linalg.norm(coords[:, None, :] - knots[None, :, :], axis=2)
        raw = tps_kernel(r)
        poly = np.column_stack([np.ones(n), coords])
        proj, *_ = np.linalg.lstsq(poly, raw, rcond=None)
        ortho = raw - poly @ proj
        scale = ortho.std(axis=0, ddof=0)
        scale[scale == 0] = 1.0
        splines = ortho / scale
    else:
        knots = np.zeros((0, 2))
        proj = np.zeros((3, 0))
        scale = np.zeros(0)
        splines = np.zeros((n, 0))

    topo_mean = topo.mean(axis=0)
    topo_scale = topo.std(axis=0, ddof=0)
    topo_scale[topo_scale == 0] = 1.0
    design = np.hstack([np.ones((n, 1)), splines,
                        (topo - topo_mean) / topo_scale])

    sv = np.linalg.svd(design, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) and n >= design.shape[1]:
        raise ValueError("design matrix is rank deficient")
    return BasisSystem(knots=knots, n_splines=n_splines, design=design,
                       condition_number=cond, _proj=proj, _spline_scale=scale,
                       _topo_mean=topo_mean, _topo_scale=topo_scale)


@dataclass
class CoefficientField:
    """Basis weights for each of the nine GEV coefficient surfaces plus the
    per-coefficient prior scale on the spline weights."""
    weights: np.ndarray       # [9 x n_columns], rows in COEF_NAMES order
    prior_scale: np.ndarray   # [9], all positive

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.prior_scale = np.asarray(self.prior_scale, dtype=float)
        if self.weights.shape[0] != len(COEF_NAMES):
            raise ValueError("expected nine weight vectors")
        if np.any(self.prior_scale <= 0):
            raise ValueError("prior scales must be positive")


def evaluate_field(sys: BasisSystem, field: CoefficientField,
                   coords=None, topo=None) -> np.ndarray:
    """Per-target GEV coefficients, [target x 9]. With coords/topo omitted
    the build stations are used (design @ weights)."""
    if coords is None:
        design = sys.design
    else:
        design = sys.design_at(coords, topo)
    if field.weights.shape[1] != design.shape[1]:
        raise ValueError("weight length does not match design columns")
    return design @ field.weights.T


def fit_field_pls(sys: BasisSystem, observations: np.ndarray,
                  ridge: float) -> np.ndarray:
    """Single-surface penalized least squares: minimize
    ||obs - X w||^2 + ridge * ||w_splines||^2 with the intercept and
    topographic columns unpenalized. Returns the weight vector."""
    obs = np.asarray(observations, dtype=float)
    x = sys.design
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if ridge == 0:
        w, _, rank, _ = np.linalg.lstsq(x, obs, rcond=None)
        if rank < x.shape[1] and x.shape[0] >= x.shape[1]:
            raise np.linalg.LinAlgError(
                "singular normal equations with ridge = 0")
        return w
    pen = np.zeros(x.shape[1])
    pen[1:1 + sys.n_splines] = ridge
    xtx = x.T @ x + np.diag(pen)
    return linalg.solve(xtx, x.T @ obs, assume_a="pos")
