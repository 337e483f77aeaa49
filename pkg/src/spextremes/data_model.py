"""Observational data structures and delimited-text ingestion.

Seasonal maxima live in a [year x station] matrix with NaN marking missing
entries; missingness is preserved, never imputed, and skipped in all
likelihood products. Covariates split into spatially uniform drivers
(GHG, ELI) kept as plain series and station-resolved drivers (PDSI, Urban)
kept as [year x station] matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

SPATIAL_COVARIATE_NAMES = ("log_precip", "elevation", "slope", "aspect",
                           "dist_coast")
MIN_NONMISSING_YEARS = 10


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Station:
    id: str
    lon: float
    lat: float
    spatial_covariates: np.ndarray  # the 5 values in SPATIAL_COVARIATE_NAMES order

    def __post_init__(self):
        sc = np.asarray(self.spatial_covariates, dtype=float)
        object.__setattr__(self, "spatial_covariates", sc)
        if sc.shape != (5,):
            raise DataValidationError(
                f"station {self.id}: expected 5 spatial covariates, got {sc.shape}")
        if not (np.isfinite(self.lon) and np.isfinite(self.lat)
                and np.all(np.isfinite(sc))):
            raise DataValidationError(f"station {self.id}: non-finite fields")
        aspect = sc[3]
        if not 0.0 <= aspect <= 2 * np.pi + 1e-9:
            raise DataValidationError(
                f"station {self.id}: aspect {aspect} outside [0, 2pi]")


@dataclass(frozen=True)
class StationDataset:
    stations: tuple
    years: np.ndarray        # inclusive, consecutive integers
    maxima: np.ndarray       # [year x station], NaN = missing

    def __post_init__(self):
        ids = [s.id for s in self.stations]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise DataValidationError(f"duplicate station ids: {sorted(dupes)}")
        years = np.asarray(self.years, dtype=int)
        object.__setattr__(self, "years", years)
        if years.size > 1 and not np.all(np.diff(years) == 1):
            raise DataValidationError("year range has gaps")
        m = np.asarray(self.maxima, dtype=float)
        object.__setattr__(self, "maxima", m)
        if m.shape != (years.size, len(self.stations)):
            raise DataValidationError(
                f"maxima shape {m.shape} does not match "
                f"{years.size} years x {len(self.stations)} stations")

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def station_ids(self):
        return [s.id for s in self.stations]

    def coords(self) -> np.ndarray:
        return np.array([[s.lon, s.lat] for s in self.stations])

    def spatial_covariates(self) -> np.ndarray:
        return np.array([s.spatial_covariates for s in self.stations])

    def validate_coverage(self, relax: bool = False):
        """Enforce the >= 10 non-missing seasonal maxima inclusion rule."""
        counts = np.sum(np.isfinite(self.maxima), axis=0)
        bad = [s.id for s, c in zip(self.stations, counts)
               if c < MIN_NONMISSING_YEARS]
        if bad and not relax:
            raise DataValidationError(
                f"stations with fewer than {MIN_NONMISSING_YEARS} non-missing "
                f"maxima: {bad}")
        return self


@dataclass(frozen=True)
class CovariateBundle:
    years: np.ndarray        # covers dataset years plus any scenario years
    ghg: np.ndarray          # [year], spatially uniform
    eli: np.ndarray          # [year], spatially uniform
    pdsi: np.ndarray         # [year x station]
    urban: np.ndarray        # [year x station], 0/1

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        object.__setattr__(self, "years", years)
        for name in ("ghg", "eli", "pdsi", "urban"):
            object.__setattr__(self, name, np.asarray(getattr(self, name),
                                                      dtype=float))
        if self.ghg.shape != (years.size,) or self.eli.shape != (years.size,):
            raise DataValidationError("GHG/ELI series length mismatch")
        if self.pdsi.shape[0] != years.size or self.urban.shape[0] != years.size:
            raise DataValidationError("PDSI/Urban year dimension mismatch")
        if self.pdsi.shape != self.urban.shape:
            raise DataValidationError("PDSI/Urban shape mismatch")
        if not np.isin(np.unique(self.urban), [0.0, 1.0]).all():
            raise DataValidationError("urban must be binary")

    def year_index(self, year):
        idx = np.searchsorted(self.years, year)
        if idx >= self.years.size or self.years[idx] != year:
            raise DataValidationError(f"year {year} not covered by covariates")
        return int(idx)

    def validate_urban_monotone(self, relax: bool = False):
        """Urbanization is not undone: urban non-decreasing in time."""
        if not relax and np.any(np.diff(self.urban, axis=0) < -1e-12):
            raise DataValidationError("urban indicator decreases over time")
        return self

    def subset(self, years: np.ndarray) -> "CovariateBundle":
        idx = np.array([self.year_index(y) for y in years])
        return CovariateBundle(years=np.asarray(years, dtype=int),
                               ghg=self.ghg[idx], eli=self.eli[idx],
                               pdsi=self.pdsi[idx], urban=self.urban[idx])


@dataclass(frozen=True)
class ScalingRecord:
    """Affine maps (value - mean)/scale applied per continuous driver."""
    ghg: tuple
    eli: tuple
    pdsi: tuple

    def unscale_value(self, driver: str, standardized):
        mean, scale = getattr(self, driver)
        return standardized * scale + mean


def standardize_covariates(bundle: CovariateBundle):
    """Center and scale GHG, ELI, and PDSI to mean 0 / unit sample sd (ddof 1)
    over the bundle years; Urban is untouched. Returns the standardized
    bundle and a ScalingRecord with the inverse maps."""
    def stats(v, name):
        mean = float(np.mean(v))
        sd = float(np.std(v, ddof=1))
        if sd == 0.0:
            raise DataValidationError(f"zero-variance driver: {name}")
        return mean, sd

    g = stats(bundle.ghg, "ghg")
    e = stats(bundle.eli, "eli")
    p = stats(bundle.pdsi, "pdsi")
    out = replace(bundle,
                  ghg=(bundle.ghg - g[0]) / g[1],
                  eli=(bundle.eli - e[0]) / e[1],
                  pdsi=(bundle.pdsi - p[0]) / p[1])
    return out, ScalingRecord(ghg=g, eli=e, pdsi=p)


# ---------------------------------------------------------------------------
# CSV ingestion. Maxima: long form (station_id, year, value) or wide form
# (year, <id1>, <id2>, ...); missing = empty cell or NA. Station metadata:
# station_id, lon, lat, log_precip, elevation, slope, aspect, dist_coast.

_DEFAULT_SCHEMA = {"station_id": "station_id", "year": "year", "value": "value"}


def _read_csv(path):
    try:
        return pd.read_csv(path, na_values=["NA"])
    except Exception as exc:
        raise DataValidationError(f"failed to parse {path}: {exc}") from exc


def load_stations(path, schema=None) -> list:
    cols = dict(_DEFAULT_SCHEMA, **(schema or {}))
    df = _read_csv(path)
    sid = cols["station_id"]
    stations = []
    for _, row in df.iterrows():
        stations.append(Station(
            id=str(row[sid]), lon=float(row["lon"]), lat=float(row["lat"]),
            spatial_covariates=np.array(
                [row[c] for c in SPATIAL_COVARIATE_NAMES], dtype=float)))
    return stations


def _matrix_from_csv(path, station_ids, years=None, schema=None, what="maxima"):
    """Read a [year x station] matrix in long or wide form."""
    cols = dict(_DEFAULT_SCHEMA, **(schema or {}))
    df = _read_csv(path)
    if cols["station_id"] in df.columns:          # long form
        piv = df.pivot_table(index=cols["year"], columns=cols["station_id"],
                             values=cols["value"], aggfunc="first",
                             dropna=False)
        piv.columns = [str(c) for c in piv.columns]
    else:                                         # wide form
        piv = df.set_index(cols["year"])
        piv.columns = [str(c) for c in piv.columns]
    missing = [s for s in station_ids if s not in piv.columns]
    if missing:
        raise DataValidationError(f"{what}: missing stations {missing}")
    if years is None:
        years = np.arange(int(piv.index.min()), int(piv.index.max()) + 1)
    missing_years = sorted(set(years.tolist()) - set(int(y) for y in piv.index))
    if missing_years:
        raise DataValidationError(f"{what}: missing years {missing_years}")
    piv = piv.reindex(index=years, columns=station_ids)
    return years, piv.to_numpy(dtype=float)


def load_dataset(path, stations_path, schema=None,
                 relax_min_years: bool = False) -> StationDataset:
    """Load seasonal maxima plus station metadata; missing entries are
    preserved as NaN."""
    stations = load_stations(stations_path, schema)
    ids = [s.id for s in stations]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise DataValidationError(f"duplicate station ids: {sorted(dupes)}")
    years, maxima = _matrix_from_csv(path, ids, schema=schema, what="maxima")
    ds = StationDataset(stations=tuple(stations), years=years, maxima=maxima)
    return ds.validate_coverage(relax=relax_min_years)


def _series_from_csv(path, schema=None):
    cols = dict(_DEFAULT_SCHEMA, **(schema or {}))
    df = _read_csv(path)
    df = df.sort_values(cols["year"])
    return df[cols["year"]].to_numpy(dtype=int), \
        df[cols["value"]].to_numpy(dtype=float)


def load_covariates(paths: dict, dataset: StationDataset, schema=None,
                    extra_years=(), relax_urban_monotone=False) -> CovariateBundle:
    """Load the four drivers; all must cover the dataset years plus any
    requested scenario years (supersets allowed)."""
    need = np.unique(np.concatenate([dataset.years,
                                     np.asarray(extra_years, dtype=int)])) \
        if len(extra_years) else dataset.years
    years = np.arange(int(need.min()), int(need.max()) + 1)

    def align_series(name):
        ys, vs = _series_from_csv(paths[name], schema)
        missing = sorted(set(years.tolist()) - set(ys.tolist()))
        if missing:
            raise DataValidationError(f"{name}: missing years {missing}")
        lut = dict(zip(ys.tolist(), vs))
        return np.array([lut[y] for y in years])

    ghg = align_series("ghg")
    eli = align_series("eli")
    _, pdsi = _matrix_from_csv(paths["pdsi"], dataset.station_ids, years,
                               schema, what="pdsi")
    _, urban = _matrix_from_csv(paths["urban"], dataset.station_ids, years,
                                schema, what="urban")
    if np.any(~np.isfinite(pdsi)) or np.any(~np.isfinite(urban)):
        raise DataValidationError("PDSI/Urban contain missing entries")
    bundle = CovariateBundle(years=years, ghg=ghg, eli=eli, pdsi=pdsi,
                             urban=urban)
    return bundle.validate_urban_monotone(relax=relax_urban_monotone)


def save_dataset(ds: StationDataset, maxima_path, stations_path):
    """Write the CSV schemas `load_dataset` reads (wide-form maxima)."""
    sdf = pd.DataFrame({
        "station_id": ds.station_ids,
        "lon": [s.lon for s in ds.stations],
        "lat": [s.lat for s in ds.stations],
    })
    covs = ds.spatial_covariates()
    for j, name in enumerate(SPATIAL_COVARIATE_NAMES):
        sdf[name] = covs[:, j]
    sdf.to_csv(stations_path, index=False)

    mdf = pd.DataFrame(ds.maxima, columns=ds.station_ids)
    mdf.insert(0, "year", ds.years)
    mdf.to_csv(maxima_path, index=False)


def save_covariates(bundle: CovariateBundle, station_ids, paths: dict):
    for name in ("ghg", "eli"):
        pd.DataFrame({"year": bundle.years,
                      "value": getattr(bundle, name)}).to_csv(paths[name],
                                                              index=False)
    for name in ("pdsi", "urban"):
        df = pd.DataFrame(getattr(bundle, name), columns=station_ids)
        df.insert(0, "year", bundle.years)
        df.to_csv(paths[name], index=False)
