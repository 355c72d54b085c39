import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from boxclim.carbon import simulate, validate_operator
from boxclim.scenarios import run_pulse
from randomops import random_operator

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_random_operator_is_conservative_and_admissible(seed):
    op = random_operator(np.random.default_rng(seed))
    A = op.matrix
    assert np.max(np.abs(A.sum(axis=0))) <= 1e-12 * max(1.0, np.max(np.abs(A)))
    assert np.linalg.norm(A @ op.m_eq) <= 1e-10 * np.linalg.norm(op.m_eq)
    assert validate_operator(op).ok


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=80))
def test_mass_conservation_under_emissions(seed, T):
    rng = np.random.default_rng(seed)
    op = random_operator(rng)
    e = rng.normal(0, 5, T)
    tr = simulate(op, op.m_eq, e)
    gain = tr.masses[-1].sum() - tr.masses[0].sum()
    assert abs(gain - e.sum()) <= 1e-10 * tr.masses[0].sum()


@settings(max_examples=200, deadline=None)
@given(seeds, st.floats(min_value=0.5, max_value=50.0))
def test_pulse_fraction_linear_and_sign_symmetric(seed, p):
    op = random_operator(np.random.default_rng(seed))
    f = run_pulse(op, p, 60)
    assert f[0] == 1.0
    np.testing.assert_allclose(run_pulse(op, -p, 60), f, rtol=0, atol=1e-12)
    np.testing.assert_allclose(run_pulse(op, 2 * p, 60), f, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_pulse_fraction_tends_to_equilibrium_share(seed):
    op = random_operator(np.random.default_rng(seed), max_n=4)
    lam = np.sort(np.abs(np.linalg.eigvals(op.matrix).real))
    assume(lam[1] > 2e-3)
    horizon = int(40.0 / lam[1])
    f = run_pulse(op, 10.0, horizon)
    share = op.m_eq[0] / op.m_eq.sum()
    assert abs(f[-1] - share) < 1e-6
