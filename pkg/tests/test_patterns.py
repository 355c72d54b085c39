import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boxclim.errors import ConfigError, DataError, DegenerateRegressor, EmptyRegion, SchemaError
from boxclim.patterns import (GridField, KSDamageParams, Region, RegionSet, aggregate_region, anchor_absolute,
                              city_values, estimate_pattern, ks_damage, ks_tfp, load_pattern_library, read_grid,
                              reference_table, regrid_bilinear, rescale_climatology, sample, scale_pattern,
                              write_grid)

BOX = Region("BOX", "box", ((-20.0, -10.0), (30.0, -10.0), (30.0, 40.0), (-20.0, 40.0)))
DATELINE = Region("DTL", "across the dateline", ((160.0, 0.0), (200.0, 0.0), (200.0, 30.0), (160.0, 30.0)))


def random_field(seed, nlat=18, nlon=36):
    base = GridField.uniform(0.0, nlat, nlon)
    return base.with_values(np.random.default_rng(seed).normal(size=base.shape))


# ---------------------------------------------------------------- regression
def test_exact_slope_through_origin():
    x = np.linspace(0.1, 3.0, 40)
    y = np.stack([1.5 * x, -0.5 * x], axis=1)
    fit = estimate_pattern(y, x)
    np.testing.assert_allclose(fit.beta, [1.5, -0.5], rtol=1e-14)
    assert np.all(fit.residual_rms < 1e-14)


def test_constant_local_series_with_free_intercept():
    x = np.linspace(0.0, 2.0, 25)
    fit = estimate_pattern(np.full(25, 4.2), x, intercept_mode="free")
    assert abs(fit.beta) < 1e-14
    assert fit.intercept == pytest.approx(4.2)


@pytest.mark.parametrize("mode", ["zero", "free"])
def test_noisy_fit_matches_normal_equations(mode):
    rng = np.random.default_rng(11)
    x = np.cumsum(rng.uniform(0, 0.05, 120))
    y = 1.3 * x[:, None] + rng.normal(scale=0.2, size=(120, 5))
    fit = estimate_pattern(y, x, intercept_mode=mode)
    X = x[:, None] if mode == "zero" else np.column_stack([np.ones_like(x), x])
    coef = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(fit.beta, coef[-1], atol=1e-10)


def test_regression_errors():
    with pytest.raises(DegenerateRegressor):
        estimate_pattern(np.ones(5), np.zeros(5))
    with pytest.raises(DegenerateRegressor):
        estimate_pattern(np.ones(5), np.full(5, 2.0), intercept_mode="free")
    with pytest.raises(SchemaError):
        estimate_pattern(np.ones(5), np.ones(4))
    with pytest.raises(SchemaError):
        estimate_pattern(np.ones(5), np.arange(5.0), intercept_mode="robust")


def test_fit_on_grid_returns_field():
    g = GridField.uniform(0.0, 4, 8)
    x = np.linspace(0.2, 1.0, 10)
    fit = estimate_pattern(np.broadcast_to(2.0 * x[:, None, None], (10, 4, 8)), x, grid=g)
    assert isinstance(fit.beta, GridField)
    np.testing.assert_allclose(fit.beta.values, 2.0)


# ---------------------------------------------------------------- scaling
def test_scaling_is_linear_and_zero_warming_returns_climatology():
    beta = random_field(1)
    clim = random_field(2)
    a = scale_pattern(1.3, beta).values + scale_pattern(0.7, beta).values
    np.testing.assert_allclose(a, scale_pattern(2.0, beta).values, atol=1e-14)
    np.testing.assert_array_equal(anchor_absolute(clim, 0.0, beta).values, clim.values)


def test_anchor_regrids_pattern():
    clim = GridField.uniform(10.0, 36, 72)
    beta = GridField.uniform(1.5, 18, 36)
    out = anchor_absolute(clim, 2.0, beta)
    assert out.same_grid(clim)
    np.testing.assert_allclose(out.values, 13.0)


def test_rescale_climatology_sets_global_mean():
    clim = random_field(5)
    assert rescale_climatology(clim, 14.0).mean() == pytest.approx(14.0, abs=1e-12)


# ---------------------------------------------------------------- grids
def test_grid_validation():
    with pytest.raises(SchemaError):
        GridField([0.0, 1.0, 3.0], [0.0], np.zeros((3, 1)))
    with pytest.raises(SchemaError):
        GridField([0.0, 95.0], [0.0], np.zeros((2, 1)))
    with pytest.raises(SchemaError):
        GridField([0.0], [0.0, 1.0], np.zeros((2, 1)))


def test_grid_round_trip(tmp_path):
    f = random_field(3)
    vals = f.values.copy()
    vals[2, 5] = np.nan
    f = f.with_values(vals)
    g = read_grid(write_grid(f, tmp_path / "f.csv"))
    assert g.same_grid(f)
    np.testing.assert_array_equal(g.values, f.values)
    with pytest.raises(DataError):
        read_grid(tmp_path / "missing.csv")


def test_sampling_exact_at_centres_and_periodic():
    f = random_field(4)
    np.testing.assert_allclose(sample(f, f.lat[3], f.lon[7]), f.values[3, 7])
    np.testing.assert_allclose(sample(f, f.lat[3], f.lon[7] + 360.0), f.values[3, 7])
    # midway across the seam is the mean of the two edge columns
    mid = sample(f, f.lat[3], 180.0)
    assert mid == pytest.approx(0.5 * (f.values[3, 0] + f.values[3, -1]))


def test_regrid_preserves_linear_fields():
    src = GridField.uniform(0.0, 18, 36)
    LA, _ = np.meshgrid(src.lat, src.lon, indexing="ij")
    src = src.with_values(0.1 * LA + 3.0)
    dst = GridField.uniform(0.0, 36, 72)
    out = regrid_bilinear(src, dst)
    inner = (dst.lat > src.lat[0]) & (dst.lat < src.lat[-1])
    LA2, _ = np.meshgrid(dst.lat, dst.lon, indexing="ij")
    np.testing.assert_allclose(out.values[inner], (0.1 * LA2 + 3.0)[inner], atol=1e-12)


# ---------------------------------------------------------------- regions
def test_uniform_field_region_mean():
    rs = RegionSet([BOX, DATELINE])
    out = aggregate_region(GridField.uniform(7.5), rs)
    assert out == {"BOX": pytest.approx(7.5), "DTL": pytest.approx(7.5)}


def test_region_mean_is_cos_weighted():
    f = GridField.uniform(0.0)
    LA, _ = np.meshgrid(f.lat, f.lon, indexing="ij")
    f = f.with_values(LA)
    idx = RegionSet([BOX]).assign(f)
    sel = idx == 0
    w = np.cos(np.deg2rad(LA[sel]))
    assert aggregate_region(f, RegionSet([BOX]))["BOX"] == pytest.approx(np.sum(w * LA[sel]) / w.sum())


def test_aggregation_commutes_with_scaling():
    rs = RegionSet([BOX, DATELINE])
    beta = random_field(6, 36, 72)
    a = aggregate_region(scale_pattern(2.3, beta), rs)
    b = aggregate_region(beta, rs)
    for k in a:
        assert a[k] == pytest.approx(2.3 * b[k], rel=1e-12)


def test_region_means_invariant_under_longitude_roll():
    rs = RegionSet([BOX, DATELINE])
    f = random_field(7, 36, 72)
    base = aggregate_region(f, rs)
    for k in (1, 17, 36):
        rolled = aggregate_region(f.roll_lon(k), RegionSet([BOX, DATELINE]))
        for key in base:
            assert rolled[key] == pytest.approx(base[key], rel=1e-12)


def test_first_region_wins_on_overlap():
    inner = Region("IN", "inner", ((0.0, 0.0), (20.0, 0.0), (20.0, 20.0), (0.0, 20.0)))
    f = GridField.uniform(1.0)
    idx = RegionSet([BOX, inner]).assign(f)
    assert not np.any(idx == 1)


def test_empty_region_and_masking():
    tiny = Region("TNY", "tiny", ((1.0, 1.0), (1.5, 1.0), (1.5, 1.5)))
    with pytest.raises(EmptyRegion):
        aggregate_region(GridField.uniform(1.0), RegionSet([tiny]))
    f = GridField.uniform(1.0)
    with pytest.raises(EmptyRegion):
        aggregate_region(f, RegionSet([BOX]), land_mask=np.zeros(f.shape, bool))


def test_region_set_validation():
    with pytest.raises(SchemaError):
        RegionSet([BOX, BOX])
    with pytest.raises(DataError):
        RegionSet([BOX]).subset(["NOPE"])


def test_reference_region_csv(tmp_path):
    p = tmp_path / "regions.csv"
    p.write_text(
        "Continent,Type,Name,Acronym,Coordinates\n"
        "EUROPE,Land,Box,BOX,-20|-10,30|-10,30|40,-20|40\n"
        "OCEAN,Ocean,Sea,SEA,100|-10,120|-10,120|10\n"
    )
    rs = RegionSet.from_csv(p)
    assert rs.acronyms == ["BOX"]
    assert rs.regions[0].vertices[1] == (30.0, -10.0)
    assert RegionSet.from_csv(p, kind=None).acronyms == ["BOX", "SEA"]


# ---------------------------------------------------------------- damages
def test_ks_tfp_reference_values():
    assert ks_tfp(11.58) == pytest.approx(1.0)
    assert ks_tfp(9.67) == pytest.approx(0.98383, abs=5e-6)
    assert ks_damage(11.13, 9.67) == pytest.approx(0.01551, abs=5e-5)
    assert ks_damage(28.8, 27.03) == pytest.approx(-0.1578, abs=5e-4)


def test_ks_damage_signs():
    p = KSDamageParams()
    # warming towards the optimum helps, warming past it hurts
    assert ks_damage(p.T_star, p.T_star - 3) > 0
    assert ks_damage(p.T_star + 4, p.T_star + 1) < 0
    assert ks_damage(15.0, 15.0) == 0.0
    assert np.all(ks_tfp(np.linspace(-40, 60, 50)) >= p.d)
    with pytest.raises(ConfigError):
        KSDamageParams(d=1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 45), st.floats(0.01, 0.5), st.floats(1e-4, 0.05), st.floats(1e-4, 0.05))
def test_ks_peak_is_the_maximum(T, d, kp, km):
    p = KSDamageParams(d=d, T_star=11.58, kappa_plus=kp, kappa_minus=km)
    grid = np.linspace(-40, 60, 2001)
    assert grid[np.argmax(ks_tfp(grid, p))] == pytest.approx(11.58, abs=0.05)
    assert ks_tfp(T, p) <= ks_tfp(11.58, p)


# ---------------------------------------------------------------- data access
def test_reference_tables_bundled():
    cities = reference_table("city_temperatures")
    assert len(cities) == 15
    santiago = next(c for c in cities if c["city"] == "Santiago")
    assert ks_tfp(santiago["era5"]) == pytest.approx(0.98383, abs=5e-6)
    regions = {r["acronym"] for r in reference_table("wgi_land_regions")}
    assert {"CNA", "ECA", "ARP", "EEU", "SAS"} <= regions


def test_city_values_on_uniform_field():
    cities = reference_table("city_temperatures")
    vals = city_values(GridField.uniform(3.0), cities)
    assert set(vals) == {c["city"] for c in cities}
    assert all(v == pytest.approx(3.0) for v in vals.values())


def test_missing_library_raises(tmp_path):
    with pytest.raises(DataError):
        load_pattern_library(tmp_path / "manifest.yaml")
