import numpy as np
import pytest

from fblmpc.mpc import run_mission
from fblmpc.scenario import default_scenario, make_streams, place_users

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def cfg():
    return default_scenario()


@pytest.fixture(scope="session")
def nominal(cfg):
    """Undisturbed closed-loop mission of seed 0: (users, trace, nlos_key)."""
    st = make_streams(0)
    users = place_users(cfg, st.users)
    trace = run_mission(cfg, users, st.disturbance, st.nlos_key)
    return users, trace, st.nlos_key


@pytest.fixture(scope="session")
def acceptance():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def rand_complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
