import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblmpc.scenario import (ConfigError, ScenarioConfig, default_scenario, dump_scenario, load_scenario,
                             make_streams, place_users)


def test_default_values_follow_the_parameter_table():
    c = default_scenario()
    assert (c.num_users, c.num_antennas, c.horizon) == (3, 4, 5)
    assert (c.v_max, c.blocklength, c.error_prob, c.p_max) == (15.0, 1000.0, 1e-5, 230.0)
    assert (c.uav_weight, c.rotor_area, c.drag_coeff) == (39.2, 0.503, 0.08)
    assert c.r_a == (750.0, 50.0, 500.0) and c.r_b == (1000.0, 200.0, 300.0)


def test_noise_power_from_psd_and_bandwidth():
    # -174 dBm/Hz over 5 MHz: 10^(-17.4) mW/Hz * 5e6 Hz / 1000
    expected = 10 ** (-17.4) * 5e6 / 1000.0
    assert default_scenario().noise_power == pytest.approx(expected, rel=1e-12)
    assert default_scenario().noise_power == pytest.approx(1.9905e-14, rel=1e-4)


def test_default_weights():
    c = default_scenario()
    psi1, psi2, psi3 = c.weights()
    assert psi1 == 1.0
    assert psi2 == pytest.approx(1.0 / (250 ** 2 + 150 ** 2 + 200 ** 2))
    assert psi3 == pytest.approx(1.0 / c.hover_power)


def test_default_document_round_trips():
    assert load_scenario(dump_scenario(default_scenario())) == default_scenario()


def test_partial_document_keeps_defaults():
    cfg = load_scenario("num_users = 5\nr_B_m = 900, 100, 250  # target\n")
    assert cfg.num_users == 5 and cfg.r_b == (900.0, 100.0, 250.0)
    assert cfg.num_antennas == 4


@pytest.mark.parametrize("text, needle", [
    ("error_prob = 0.7", "error_prob"),
    ("d_min_m = 0", "d_min"),
    ("bogus_key = 1", "bogus_key"),
    ("num_users = 2.5", "num_users"),
    ("altitude_range_m = 500, 100", "altitude_range"),
])
def test_invalid_documents_name_the_offender(text, needle):
    with pytest.raises(ConfigError) as err:
        load_scenario(text)
    assert needle in str(err.value)


def test_constructor_validates():
    with pytest.raises(ConfigError):
        ScenarioConfig(amp_efficiency=1.5)


def test_streams_are_deterministic():
    a, b = make_streams(3), make_streams(3)
    assert np.array_equal(a.users.random(5), b.users.random(5))
    assert np.array_equal(a.disturbance.random(5), b.disturbance.random(5))
    assert make_streams(3, disturbance_seed=4).nlos_key == 3


def test_same_seed_same_users():
    cfg = default_scenario()
    u1 = place_users(cfg, make_streams(11).users)
    u2 = place_users(cfg, make_streams(11).users)
    assert np.array_equal(u1.positions, u2.positions)
    with pytest.raises(ValueError):
        u1.positions[0, 0] = 1.0


def test_users_stay_in_corridor():
    cfg = default_scenario().replace(num_users=10000)
    pos = place_users(cfg, np.random.default_rng(0)).positions
    a, b = np.array(cfg.r_a[:2]), np.array(cfg.r_b[:2])
    unit = (b - a) / np.linalg.norm(b - a)
    rel = pos[:, :2] - a
    perp = np.abs(rel[:, 0] * unit[1] - rel[:, 1] * unit[0])
    along = rel @ unit
    assert perp.max() <= cfg.corridor_width / 2
    assert along.min() >= 0 and along.max() <= np.linalg.norm(b - a)
    assert pos[:, 2].min() >= 0.5 and pos[:, 2].max() <= 3.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(10, 1e5), st.integers(1, 8))
def test_valid_fields_round_trip(eps, blocklength, users):
    cfg = default_scenario().replace(error_prob=eps, blocklength=blocklength, num_users=users)
    back = load_scenario(dump_scenario(cfg))
    assert back == cfg
    assert math.isfinite(back.noise_power)
