"""Thin-plate-spline basis: double-loop oracle, orthogonality, PLS fit."""
import numpy as np
import pytest

from spextremes.basis import (BasisSystem, CoefficientField, build_basis,
                              effective_n_splines, evaluate_field,
                              farthest_point_knots, fit_field_pls,
                              tps_kernel)


def _make_inputs(rng, n=30):
    coords = np.column_stack([rng.uniform(-124, -116, n),
                              rng.uniform(42, 50, n)])
    topo = rng.normal(size=(n, 5))
    return coords, topo


def test_tps_kernel_oracle():
    r = np.array([0.0, 0.5, 1.0, 2.0, 10.0])
    expected = np.array([0.0] + [ri ** 2 * np.log(ri) for ri in r[1:]])
    np.testing.assert_allclose(tps_kernel(r), expected, rtol=1e-14)


def test_design_matches_double_loop(rng):
    """Rebuild the spline block cell by cell with explicit loops."""
    coords, topo = _make_inputs(rng)
    n_splines = 8
    b = build_basis((coords, topo), n_splines, seed=3)
    n = coords.shape[0]

    raw = np.empty((n, n_splines))
    for i in range(n):
        for k in range(n_splines):
            d = np.hypot(coords[i, 0] - b.knots[k, 0],
                         coords[i, 1] - b.knots[k, 1])
            raw[i, k] = d * d * np.log(d) if d > 0 else 0.0
    # remove the affine component then rescale, as the builder records
    poly = np.column_stack([np.ones(n), coords])
    proj, *_ = np.linalg.lstsq(poly, raw, rcond=None)
    ortho = raw - poly @ proj
    expected = ortho / ortho.std(axis=0)
    np.testing.assert_allclose(b.design[:, 1:1 + n_splines], expected,
                               atol=1e-8)


def test_design_layout(rng):
    coords, topo = _make_inputs(rng)
    b = build_basis((coords, topo), 6, seed=0)
    assert b.design.shape == (30, 1 + 6 + 5)
    np.testing.assert_allclose(b.design[:, 0], 1.0)          # intercept
    # topo block is standardized
    np.testing.assert_allclose(b.design[:, 7:].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(b.design[:, 7:].std(axis=0), 1.0, atol=1e-12)


def test_spline_block_orthogonal_to_affine(rng):
    coords, topo = _make_inputs(rng)
    b = build_basis((coords, topo), 10, seed=1)
    poly = np.column_stack([np.ones(30), coords])
    cross = poly.T @ b.design[:, 1:11]
    np.testing.assert_allclose(cross, 0.0, atol=1e-7)


def test_design_at_reproduces_build(rng):
    coords, topo = _make_inputs(rng)
    b = build_basis((coords, topo), 7, seed=2)
    again = b.design_at(coords, topo)
    np.testing.assert_allclose(again, b.design, atol=1e-10)


def test_farthest_point_knots_space_filling(rng):
    coords, _ = _make_inputs(rng, n=60)
    idx = farthest_point_knots(coords, 12, seed=0)
    assert len(set(idx.tolist())) == 12
    # knots are more spread out than a random subset of the same size
    def min_dist(c):
        d = np.linalg.norm(c[:, None] - c[None, :], axis=2)
        return d[~np.eye(len(c), dtype=bool)].min()
    rand = coords[rng.choice(60, 12, replace=False)]
    assert min_dist(coords[idx]) >= min_dist(rand)


def test_effective_n_splines():
    assert effective_n_splines(99, 200) == 99
    assert effective_n_splines(99, 50) == 44
    assert effective_n_splines(99, 7) == 1
    assert effective_n_splines(0, 50) == 0


def test_build_basis_rejects_too_many_knots(rng):
    coords, topo = _make_inputs(rng, n=10)
    with pytest.raises(ValueError):
        build_basis((coords, topo), 10, seed=0)


def test_fit_field_pls_recovers_smooth_surface(rng):
    coords, topo = _make_inputs(rng, n=80)
    b = build_basis((coords, topo), 20, seed=4)
    w_true = rng.normal(0, 1, b.n_columns)
    obs = b.design @ w_true
    w_hat = fit_field_pls(b, obs, ridge=1e-8)
    np.testing.assert_allclose(b.design @ w_hat, obs, atol=1e-6)
    # exact normal-equations oracle for a positive ridge
    ridge = 0.7
    pen = np.zeros(b.n_columns)
    pen[1:21] = ridge
    expected = np.linalg.solve(b.design.T @ b.design + np.diag(pen),
                               b.design.T @ obs)
    np.testing.assert_allclose(fit_field_pls(b, obs, ridge=ridge), expected,
                               atol=1e-9)


def test_evaluate_field_consistency(rng):
    coords, topo = _make_inputs(rng, n=25)
    b = build_basis((coords, topo), 5, seed=0)
    weights = rng.normal(size=(9, b.n_columns))
    field = CoefficientField(weights=weights, prior_scale=np.ones(9))
    at_build = evaluate_field(b, field)
    np.testing.assert_allclose(at_build, b.design @ weights.T)
    subset = evaluate_field(b, field, coords=coords[:4], topo=topo[:4])
    np.testing.assert_allclose(subset, at_build[:4], atol=1e-10)
