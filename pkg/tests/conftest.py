import numpy as np
import pytest

from boxclim.econ import EconConfig, InitialState
from boxclim.presets import load_emulator
from boxclim.scenarios import bundled_emissions, spin_up_present_day


@pytest.fixture(scope="session")
def history():
    return bundled_emissions("RCP8.5")


@pytest.fixture(scope="session")
def spinups(history):
    return {name: spin_up_present_day(load_emulator(name), history, 401.0) for name in ("3SR", "4PR", "4PR-X")}


@pytest.fixture(scope="session")
def econ_inputs(spinups):
    cfg = EconConfig()
    out = {}
    for name, sp in spinups.items():
        init = InitialState(cfg.K0, np.array(sp.state.masses), sp.temperature.T_atm, sp.temperature.T_ocean)
        out[name] = (sp.emulator, init)
    return cfg, out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    RESULTS = getattr(mod, "RESULTS", None)
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
