import numpy as np
import pytest

from fblmpc import channel as ch
from fblmpc.baselines import (BaselineKind, DegenerateBaseline, FixedPath, beamform_baseline, execute_open_loop,
                              fixed_path_rates, proposed_beams, qos_satisfaction, run_offline_joint,
                              run_offline_mpc)
from fblmpc.fbl import FblParams, fbl_rate
from fblmpc.mpc import run_mission
from fblmpc.scenario import default_scenario, make_streams, place_users

from conftest import rand_complex


def test_zero_forcing_nulls_interference():
    cfg = default_scenario()
    h = rand_complex(np.random.default_rng(0), 3, 4)
    w = beamform_baseline("bf-zf", h, cfg)
    cross = np.conj(h) @ w.T
    off = cross - np.diag(np.diag(cross))
    assert np.max(np.abs(off)) <= 1e-12 * np.max(np.abs(cross))


@pytest.mark.parametrize("kind", ["bf-mrt", "bf-zf", "bf-equal"])
def test_beams_use_the_full_budget(kind):
    cfg = default_scenario()
    h = rand_complex(np.random.default_rng(1), 3, 4)
    w = beamform_baseline(kind, h, cfg)
    assert float(np.sum(np.abs(w) ** 2)) / cfg.amp_efficiency == pytest.approx(cfg.p_com_max, rel=1e-12)
    per_user = np.sum(np.abs(w) ** 2, axis=1)
    assert np.allclose(per_user, per_user[0])


def test_single_user_mrt_is_matched_filter():
    cfg = default_scenario().replace(num_users=1)
    h = rand_complex(np.random.default_rng(2), 1, 4)
    w = beamform_baseline("bf-mrt", h, cfg, budget=2.0)
    assert np.allclose(w[0], np.sqrt(2.0) * h[0] / np.linalg.norm(h[0]))
    gamma = ch.sinr_all(h, w, 0.5)[0]
    assert gamma == pytest.approx(2.0 * np.sum(np.abs(h) ** 2) / 0.5)


def test_equal_power_is_constant():
    cfg = default_scenario()
    w = beamform_baseline("bf-equal", np.ones((3, 4)), cfg, budget=12.0)
    assert np.allclose(w, 1.0)


def test_zero_forcing_degenerate_cases():
    cfg = default_scenario()
    with pytest.raises(DegenerateBaseline):
        beamform_baseline("bf-zf", rand_complex(np.random.default_rng(3), 5, 4), cfg)
    same = np.tile(rand_complex(np.random.default_rng(4), 1, 4), (2, 1))
    with pytest.raises(DegenerateBaseline):
        beamform_baseline("bf-zf", same, cfg)
    with pytest.raises(ValueError):
        beamform_baseline("bf-proposed", same, cfg)


def test_stacked_slots_match_per_slot():
    cfg = default_scenario()
    H = rand_complex(np.random.default_rng(5), 4, 3, 4)
    stacked = beamform_baseline("bf-mrt", H, cfg)
    assert np.allclose(stacked[2], beamform_baseline("bf-mrt", H[2], cfg))


def test_qos_satisfaction_examples():
    assert qos_satisfaction(np.array([[1.0, 2.0], [0.5, 3.0]]), 1.0) == 50.0
    assert qos_satisfaction(np.ones((4, 3)), 0.0) == 100.0
    assert qos_satisfaction(np.ones((4, 3)), 1e9) == 0.0
    with pytest.raises(ValueError):
        qos_satisfaction(np.zeros((0, 3)), 0.1)


def test_proposed_beams_beat_max_min_start_on_sum_rate():
    cfg = default_scenario()
    rng = np.random.default_rng(6)
    h = 3e-5 * rand_complex(rng, 3, 4)
    budget = cfg.amp_efficiency * cfg.p_com_max
    c = FblParams.from_config(cfg).c
    w = proposed_beams(h, budget, cfg)
    from fblmpc.optimizer import p2init_slot
    start = fbl_rate(ch.sinr_all(h, p2init_slot(h, budget, cfg), cfg.noise_power), c)
    got = fbl_rate(ch.sinr_all(h, w, cfg.noise_power), c)
    assert got.sum() >= start.sum() - 1e-9
    assert got.min() >= cfg.r_min
    assert float(np.sum(np.abs(w) ** 2)) <= budget * (1 + 1e-9)


def test_fixed_path_rates_shape(nominal, cfg):
    users, trace, key = nominal
    path = FixedPath.from_trace(trace)
    short = FixedPath(path.r[:3], path.v[:3])
    for kind in ("bf-mrt", "bf-zf", "bf-equal", "bf-proposed"):
        rates = fixed_path_rates(kind, cfg, users, short, key)
        assert rates.shape == (3, cfg.num_users) and np.all(np.isfinite(rates))


def test_offline_mpc_matches_online_without_disturbance(nominal, cfg):
    users, online, key = nominal
    off = run_offline_mpc(cfg, users, make_streams(0).disturbance, key)
    assert off.termination == online.termination
    assert np.array_equal(off.positions, online.positions)
    assert all(np.array_equal(a.w, b.w) for a, b in zip(off.steps, online.steps))


def test_open_loop_controls_ignore_the_disturbance_stream():
    cfg = default_scenario().replace(disturbance=6.0, mission_cap=8)
    st = make_streams(1)
    users = place_users(cfg, st.users)
    plans = []
    for dseed in (10, 11):
        tr = run_offline_mpc(cfg, users, make_streams(1, disturbance_seed=dseed).disturbance, st.nlos_key)
        plans.append([s.v for s in tr.steps])
    n = min(len(p) for p in plans)
    assert n > 0 and all(np.array_equal(a, b) for a, b in zip(plans[0][:n], plans[1][:n]))


def test_open_loop_stops_when_plan_runs_out():
    cfg = default_scenario()
    users = place_users(cfg, make_streams(0).users)
    w = np.zeros((3, 4), dtype=complex)
    tr = execute_open_loop(cfg, users, np.random.default_rng(0), 0, [(np.zeros(3), w)] * 2, "test")
    assert tr.termination == "plan-exhausted" and len(tr.steps) == 2
    assert np.allclose(tr.final_position, cfg.r_a)


def test_offline_joint_short_horizon_runs():
    cfg = default_scenario().replace(mission_cap=6, ao_max_iters=2)
    st = make_streams(0)
    tr = run_offline_joint(cfg, place_users(cfg, st.users), st.disturbance, st.nlos_key)
    assert tr.scheme == "offline-joint" and len(tr.steps) == 6
    assert tr.termination == "plan-exhausted"
