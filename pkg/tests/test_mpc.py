import csv
import io
import json

import numpy as np
import pytest

from fblmpc.mpc import (TRACE_SCHEMA_VERSION, applied_displacement, braking_control, control_violations,
                        disturbance, replay_positions, run_mission)
from fblmpc.propulsion import PropulsionParams, propulsion_power
from fblmpc.scenario import default_scenario, make_streams, place_users


def test_zero_disturbance_is_zero_but_consumes_draws():
    a, b = np.random.default_rng(1), np.random.default_rng(1)
    assert np.array_equal(disturbance(a, 0.0), np.zeros(3))
    disturbance(b, 6.0)
    assert a.random() == b.random()


def test_disturbance_statistics():
    rng = np.random.default_rng(0)
    norms = np.array([np.linalg.norm(disturbance(rng, 6.0)) for _ in range(100000)])
    assert norms.max() <= 6.0
    # magnitude uniform on [0, 6]: mean 3 within 2%
    assert norms.mean() == pytest.approx(3.0, rel=0.02)
    fixed = [np.linalg.norm(disturbance(rng, 6.0, "fixed-magnitude")) for _ in range(100)]
    assert np.allclose(fixed, 6.0)


def test_disturbance_is_seeded():
    a = [disturbance(np.random.default_rng(5), 6.0) for _ in range(2)]
    assert np.array_equal(a[0], a[1])


def test_displacement_keeps_position_in_box():
    cfg = default_scenario()
    r = np.array([cfg.x_range[1] - 1.0, 100.0, 300.0])
    d = applied_displacement(r, np.zeros(3), np.array([5.0, 0, 0]), cfg)
    assert d[0] == pytest.approx(1.0) and d[1] == 0.0


def test_braking_respects_limits():
    cfg = default_scenario()
    r = np.array([900.0, 100.0, 400.0])
    v_prev = np.array([12.0, 5.0, -6.0])
    w_prev = np.full((3, 4), 0.3 + 0j)
    v, w = braking_control(cfg, r, v_prev, w_prev)
    assert np.linalg.norm(v) < np.linalg.norm(v_prev)
    assert not control_violations(cfg, r, v_prev, v, w)


def test_control_checker_flags_violations():
    cfg = default_scenario()
    r = np.array([900.0, 100.0, 400.0])
    w = np.zeros((3, 4), dtype=complex)
    assert control_violations(cfg, r, np.zeros(3), np.array([16.0, 0, 0]), w) == ["C3", "C5"]
    # climb so that propulsion plus half the transmit budget exceeds P_max
    climb = np.array([0.0, 0.0, (cfg.p_max - cfg.hover_power - 0.4 * cfg.p_com_max) / cfg.uav_weight])
    w6 = np.zeros((3, 4), dtype=complex)
    w6[0, 0] = np.sqrt(0.5 * cfg.p_com_max * cfg.amp_efficiency)
    assert control_violations(cfg, r, climb, climb, w6) == ["C6"]
    assert "C7" in control_violations(cfg, r, np.zeros(3), np.zeros(3), np.ones((3, 4)))


def test_start_at_target_takes_no_steps():
    cfg = default_scenario().replace(r_b=default_scenario().r_a)
    st = make_streams(0)
    tr = run_mission(cfg, place_users(cfg, st.users), st.disturbance, st.nlos_key)
    assert tr.steps == [] and tr.termination == "arrived"
    assert tr.terminal_distance == 0.0


def test_nominal_mission_arrives_within_limits(nominal, cfg):
    _, tr, _ = nominal
    assert tr.termination == "arrived"
    assert tr.terminal_distance <= cfg.arrival_tol
    pp = PropulsionParams.from_config(cfg)
    for s in tr.steps:
        assert not control_violations(cfg, s.r, s.v_prev, s.v, s.w)
        assert s.p_tot <= cfg.p_max + 1e-6
        assert s.p_prop == pytest.approx(propulsion_power(s.v, pp))
        assert not s.fallback


def test_replay_is_exact(nominal):
    _, tr, _ = nominal
    assert np.array_equal(replay_positions(tr), tr.positions)


def test_missions_are_reproducible():
    cfg = default_scenario().replace(disturbance=6.0, mission_cap=6)
    runs = []
    for _ in range(2):
        st = make_streams(4)
        runs.append(run_mission(cfg, place_users(cfg, st.users), st.disturbance, st.nlos_key))
    assert runs[0].to_csv() == runs[1].to_csv()
    assert runs[0].termination == "step-cap" and len(runs[0].steps) == 6


def test_trace_csv_and_json_schema(nominal):
    _, tr, _ = nominal
    text = tr.to_csv()
    first, body = text.split("\n", 1)
    assert first == f"# schema_version={TRACE_SCHEMA_VERSION}"
    rows = list(csv.reader(io.StringIO(body)))
    assert rows[0] == tr.csv_columns()
    assert len(rows) == len(tr.steps) + 1
    assert rows[0][-1] == "rate_2" and rows[0][:4] == ["t", "r_x", "r_y", "r_z"]
    last = rows[-1]
    assert float(last[rows[0].index("r_next_x")]) == tr.final_position[0]
    summary = json.loads(tr.to_json())
    assert summary["steps"] == len(tr.steps) and summary["termination"] == "arrived"
    assert summary["energy_j"] == pytest.approx(sum(s.p_tot for s in tr.steps))
