import math

import numpy as np
import pytest

from boxclim.ebm import (EbmParams, TempState, forcing, run_temperature, spectral_radius, steady_state,
                         temp_step, update_matrix)
from boxclim.errors import ConfigError


def test_table_means():
    p = EbmParams()
    assert (p.C, p.C0, p.gamma, p.lambda_fb, p.F2x) == (7.3, 106.0, 0.73, 1.13, 3.45)
    assert p.ecs == pytest.approx(3.45 / 1.13)


def test_forcing_doubling_and_zero():
    p = EbmParams(kappa=1.0)
    assert forcing(589.0, 589.0, p) == 0.0
    assert forcing(2 * 589.0, 589.0, p) == pytest.approx(3.45, rel=1e-14)
    assert forcing(2 * 589.0, 589.0, p.with_kappa(1.2)) == pytest.approx(1.2 * 3.45, rel=1e-14)
    with pytest.raises(ValueError):
        forcing(0.0)


def test_single_step_by_hand():
    p = EbmParams()
    s = temp_step(TempState(1.0, 0.5), 2.0, p)
    assert s.T_atm == pytest.approx(1.0 + (2.0 - 0.73 * 0.5 - 1.13) / 7.3)
    assert s.T_ocean == pytest.approx(0.5 + 0.73 * 0.5 / 106.0)
    assert s.t == 1


def test_zero_forcing_stays_at_rest():
    T = run_temperature(np.zeros(100), EbmParams())
    assert np.all(T == 0.0)


def test_step_response_converges_to_analytic_equilibrium():
    p = EbmParams(kappa=1.0)
    T = run_temperature(np.full(20000, p.F2x), p)
    ss = steady_state(p.F2x, p)
    assert ss.T_atm == pytest.approx(3.45 / 1.13)
    assert abs(T[-1, 0] - ss.T_atm) < 1e-6 and abs(T[-1, 1] - ss.T_ocean) < 1e-6


def test_steady_state_is_fixed_point():
    p = EbmParams()
    ss = steady_state(4.0, p)
    nxt = temp_step(ss, 4.0, p)
    assert nxt.T_atm == pytest.approx(ss.T_atm, abs=1e-14)
    assert nxt.T_ocean == pytest.approx(ss.T_ocean, abs=1e-14)


def test_update_matrix_stable():
    p = EbmParams()
    assert spectral_radius(p) < 1
    M = update_matrix(p)
    assert M[0, 0] == pytest.approx(1 - (0.73 + 1.13) / 7.3)


def test_rejects_unstable_or_invalid():
    with pytest.raises(ConfigError):
        EbmParams(C=0.5)  # explicit step too large
    with pytest.raises(ConfigError):
        EbmParams(gamma=-0.1)
    with pytest.raises(ConfigError):
        EbmParams(C=math.nan)


def test_fast_response_timescale_order():
    # with a deep ocean the atmosphere approaches the fast quasi-equilibrium F/(lambda+gamma)
    p = EbmParams(kappa=1.0)
    T = run_temperature(np.full(40, p.F2x), p)
    assert T[40, 0] == pytest.approx(p.F2x / (p.lambda_fb + p.gamma), rel=0.15)
