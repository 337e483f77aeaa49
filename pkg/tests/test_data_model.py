"""Dataset containers, validation rules, CSV round-trips, standardization."""
import numpy as np
import pytest

from spextremes.data_model import (CovariateBundle, DataValidationError,
                                   ScalingRecord, Station, StationDataset,
                                   load_covariates, load_dataset,
                                   save_covariates, save_dataset,
                                   standardize_covariates)


def _station(i, lon=-120.0, lat=45.0):
    return Station(id=f"S{i:03d}", lon=lon + 0.1 * i, lat=lat,
                   spatial_covariates=np.arange(5, dtype=float))


def _dataset(n_stations=3, n_years=15, seed=0):
    rng = np.random.default_rng(seed)
    stations = tuple(_station(i) for i in range(n_stations))
    years = np.arange(1990, 1990 + n_years)
    maxima = rng.normal(30, 3, (n_years, n_stations))
    return StationDataset(stations=stations, years=years, maxima=maxima)


def _bundle(ds, seed=1):
    rng = np.random.default_rng(seed)
    t = ds.years.size
    n = ds.n_stations
    urban = np.zeros((t, n))
    urban[t // 2:, 0] = 1.0
    return CovariateBundle(years=ds.years, ghg=np.linspace(-1, 1, t),
                           eli=rng.normal(size=t),
                           pdsi=rng.normal(size=(t, n)), urban=urban)


def test_duplicate_station_ids_rejected():
    s = _station(1)
    with pytest.raises(DataValidationError, match="duplicate"):
        StationDataset(stations=(s, s), years=np.arange(2000, 2012),
                       maxima=np.zeros((12, 2)))


def test_year_gaps_rejected():
    stations = (_station(0),)
    with pytest.raises(DataValidationError, match="gaps"):
        StationDataset(stations=stations,
                       years=np.array([2000, 2001, 2003]),
                       maxima=np.zeros((3, 1)))


def test_shape_mismatch_rejected():
    with pytest.raises(DataValidationError, match="shape"):
        StationDataset(stations=(_station(0),), years=np.arange(2000, 2003),
                       maxima=np.zeros((4, 1)))


def test_minimum_coverage_rule():
    ds = _dataset(n_stations=2, n_years=12)
    m = ds.maxima.copy()
    m[3:, 1] = np.nan                     # second station has 3 years only
    bad = StationDataset(stations=ds.stations, years=ds.years, maxima=m)
    with pytest.raises(DataValidationError, match="non-missing"):
        bad.validate_coverage()
    bad.validate_coverage(relax=True)     # relax switch passes through
    ds.validate_coverage()                # full coverage passes


def test_urban_must_be_binary_and_monotone():
    ds = _dataset()
    b = _bundle(ds)
    with pytest.raises(DataValidationError, match="binary"):
        CovariateBundle(years=b.years, ghg=b.ghg, eli=b.eli, pdsi=b.pdsi,
                        urban=b.urban + 0.5)
    undone = b.urban.copy()
    undone[-1, 0] = 0.0                   # urbanization reversed
    bad = CovariateBundle(years=b.years, ghg=b.ghg, eli=b.eli, pdsi=b.pdsi,
                          urban=undone)
    with pytest.raises(DataValidationError, match="decreases"):
        bad.validate_urban_monotone()
    bad.validate_urban_monotone(relax=True)


def test_standardize_and_unscale():
    ds = _dataset()
    b = _bundle(ds)
    out, rec = standardize_covariates(b)
    assert isinstance(rec, ScalingRecord)
    for name in ("ghg", "eli", "pdsi"):
        v = getattr(out, name)
        assert float(np.mean(v)) == pytest.approx(0.0, abs=1e-12)
        assert float(np.std(v, ddof=1)) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(rec.unscale_value(name, v),
                                   getattr(b, name), atol=1e-12)
    np.testing.assert_allclose(out.urban, b.urban)   # untouched


def test_standardize_rejects_constant_driver():
    ds = _dataset()
    b = _bundle(ds)
    flat = CovariateBundle(years=b.years, ghg=np.zeros(b.years.size),
                           eli=b.eli, pdsi=b.pdsi, urban=b.urban)
    with pytest.raises(DataValidationError, match="zero-variance"):
        standardize_covariates(flat)


def test_csv_roundtrip(tmp_path):
    ds = _dataset(n_stations=4, n_years=20, seed=7)
    m = ds.maxima.copy()
    m[2, 1] = np.nan
    ds = StationDataset(stations=ds.stations, years=ds.years, maxima=m)
    b = _bundle(ds, seed=8)

    save_dataset(ds, tmp_path / "maxima.csv", tmp_path / "stations.csv")
    save_covariates(b, ds.station_ids,
                    {k: tmp_path / f"{k}.csv"
                     for k in ("ghg", "eli", "pdsi", "urban")})
    ds2 = load_dataset(tmp_path / "maxima.csv", tmp_path / "stations.csv")
    np.testing.assert_allclose(ds2.maxima, ds.maxima)
    assert ds2.station_ids == ds.station_ids
    np.testing.assert_array_equal(ds2.years, ds.years)
    np.testing.assert_allclose(ds2.coords(), ds.coords())

    b2 = load_covariates({k: tmp_path / f"{k}.csv"
                          for k in ("ghg", "eli", "pdsi", "urban")}, ds2)
    for name in ("ghg", "eli", "pdsi", "urban"):
        np.testing.assert_allclose(getattr(b2, name), getattr(b, name))


def test_load_covariates_requires_scenario_years(tmp_path):
    ds = _dataset()
    b = _bundle(ds)
    save_covariates(b, ds.station_ids,
                    {k: tmp_path / f"{k}.csv"
                     for k in ("ghg", "eli", "pdsi", "urban")})
    with pytest.raises(DataValidationError, match="missing years"):
        load_covariates({k: tmp_path / f"{k}.csv"
                         for k in ("ghg", "eli", "pdsi", "urban")}, ds,
                        extra_years=[2030])


def test_year_index():
    ds = _dataset()
    b = _bundle(ds)
    assert b.year_index(1992) == 2
    with pytest.raises(DataValidationError):
        b.year_index(1890)
