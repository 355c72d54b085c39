import numpy as np
import pytest

from boxclim.errors import BudgetUnreachable, ContiguityError, SchemaError, TargetNotReached
from boxclim.presets import load_emulator
from boxclim.scenarios import (EmissionSeries, bundled_emissions, load_emissions, run_pulse, run_rcp, run_zec,
                               spin_up_present_day, write_run)


def test_bundled_series_shapes():
    s = bundled_emissions("RCP8.5")
    assert s.years[0] == 1765 and s.years[-1] == 2500
    h = bundled_emissions("historical")
    for name in ("RCP2.6", "RCP4.5", "RCP6.0"):
        other = bundled_emissions(name).window(end=int(h.years[-1]))
        np.testing.assert_array_equal(other.total, h.total)


def test_loader_rejects_gaps_and_nan(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("year,fossil_industrial_gtc,land_use_gtc\n2000,1,0\n2002,1,0\n")
    with pytest.raises(ContiguityError):
        load_emissions(p)
    p.write_text("year,fossil_industrial_gtc,land_use_gtc\n2000,nan,0\n")
    with pytest.raises(SchemaError):
        load_emissions(p)
    p.write_text("year,fossil\n2000,1\n")
    with pytest.raises(SchemaError):
        load_emissions(p)


def test_pulse_fraction_starts_at_one_and_decays():
    f = run_pulse(load_emulator("4PR"), 100.0, 500)
    assert f[0] == 1.0
    assert np.all(np.diff(f) <= 1e-15)
    assert 0 < f[-1] < f[100] < 0.5


def test_pulse_with_temperature_uses_kappa_one():
    run = run_pulse(load_emulator("3SR"), 100.0, 50, with_temperature=True)
    assert run.meta["kappa"] == 1.0
    assert run.temperature[0, 0] == 0.0 and run.temperature[1, 0] > 0


def test_zero_emissions_keeps_equilibrium():
    em = load_emulator("3SR")
    run = run_rcp(em, EmissionSeries.zeros(2000, 50))
    np.testing.assert_allclose(run.masses, np.broadcast_to(em.m_eq, run.masses.shape), rtol=1e-12)
    assert np.all(run.temperature == 0)


def test_rcp_mass_balance_and_ordering():
    em = load_emulator("4PR")
    T2100 = {}
    for name in ("RCP2.6", "RCP4.5", "RCP8.5"):
        run = run_rcp(em, bundled_emissions(name).window(end=2100))
        assert run.mass_balance_error() < 1e-12
        T2100[name] = run.temperature[-1, 0]
    assert T2100["RCP2.6"] < T2100["RCP4.5"] < T2100["RCP8.5"]


def test_4prx_land_diagnostics():
    run = run_rcp(load_emulator("4PR-X"), bundled_emissions("RCP4.5").window(end=2100))
    d = run.land_diagnostics()
    assert d["equilibrium_ratio"][-1] < 1.0
    assert run.mass_balance_error() < 1e-12


def test_zec_budget_and_cessation():
    run = run_zec(load_emulator("3SR"), 0.01, 1000.0, horizon=400)
    k = run.meta["cessation_year"]
    assert run.meta["cumulative_at_cessation"] >= 1000.0
    assert run.emissions[:k - 1].sum() < 1000.0
    assert np.all(run.emissions[k:] == 0)
    # concentration follows the ramp until cessation
    assert run.masses[k - 1, 0] == pytest.approx(589.0 * 1.01 ** (k - 1), rel=1e-12)
    with pytest.raises(BudgetUnreachable):
        run_zec(load_emulator("3SR"), 0.01, 1e6, horizon=50)


def test_spinup_published_initial_states(spinups):
    published = {"3SR": (850, 983, 1377), "4PR": (850, 1237, 37236, 531)}
    for name, ref in published.items():
        sp = spinups[name]
        np.testing.assert_allclose(sp.state.masses, ref, rtol=0.01)
        assert sp.year in (2016, 2017)


def test_spinup_4prx_reaches_target_earlier(spinups):
    assert spinups["4PR-X"].year < spinups["4PR"].year
    assert spinups["4PR-X"].m_eq[3] < spinups["4PR"].m_eq[3]


def test_spinup_unreachable(history):
    with pytest.raises(TargetNotReached):
        spin_up_present_day(load_emulator("3SR"), history.window(end=1900), 401.0)


def test_write_run(tmp_path):
    run = run_rcp(load_emulator("3SR"), bundled_emissions("RCP4.5").window(end=1800))
    d = write_run(run, tmp_path / "r")
    lines = (d / "masses.csv").read_text().splitlines()
    assert lines[0] == "year,m_A,m_O1,m_O2,m_eq_A,m_eq_O1,m_eq_O2"
    assert len(lines) == run.years.size + 1
    assert (d / "meta.yaml").exists()
