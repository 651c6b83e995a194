import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblmpc import channel as ch
from fblmpc.scenario import default_scenario

from conftest import rand_complex


def test_distance_examples():
    assert ch.distance((3, 4, 0), (0, 0, 0)) == 5.0
    assert ch.distance((1, 2, 3), (1, 2, 3)) == 0.0
    assert ch.distance((800, 100, 1.5), (750, 50, 500)) == pytest.approx(math.sqrt(50 ** 2 + 50 ** 2 + 498.5 ** 2))


def test_pathloss_examples():
    assert ch.pathloss(1.0, 2.0, 1.0) == 1.0
    assert ch.pathloss(1.0, 2.0, 10.0) == pytest.approx(0.01)
    assert ch.pathloss(1e-3, 2.3, 100.0) == pytest.approx(2.512e-8, rel=1e-3)
    with pytest.raises(ValueError):
        ch.pathloss(1.0, 2.0, 0.0)
    d = np.linspace(1, 2000, 500)
    assert np.all(np.diff(ch.pathloss(1e-3, 2.3, d)) < 0)


def test_steering_vector_examples():
    assert np.allclose(ch.steering_vector(4, 0.0), np.ones(4))
    assert np.allclose(ch.steering_vector(2, 1.0), [1, -1])
    v = ch.steering_vector(8, 0.37)
    assert np.allclose(np.abs(v), 1.0)
    with pytest.raises(ValueError):
        ch.steering_vector(4, 1.5)


def test_rician_limits():
    cfg = default_scenario()
    u, r = np.array([800.0, 100.0, 1.5]), np.array([750.0, 50.0, 500.0])
    g = rand_complex(np.random.default_rng(1), 4)
    _, hhat, _, cos_t = ch.synthesize_channel(cfg.replace(rician_k_db=math.inf), u, r, g)
    assert np.allclose(hhat, ch.steering_vector(4, cos_t))
    _, hhat, _, _ = ch.synthesize_channel(cfg.replace(rician_k_db=-math.inf), u, r, g)
    assert np.allclose(hhat, g)


def test_channel_power_matches_pathloss_times_antennas():
    cfg = default_scenario()
    rng = np.random.default_rng(5)
    u, r = np.array([800.0, 100.0, 1.5]), np.array([750.0, 50.0, 500.0])
    pw = []
    for _ in range(10000):
        h, hhat, beta, _ = ch.synthesize_channel(cfg, u, r, rng)
        pw.append(np.sum(np.abs(h) ** 2))
    assert np.mean(pw) == pytest.approx(cfg.num_antennas * beta, rel=0.02)


def test_channel_factorization_is_exact():
    cfg = default_scenario()
    h, hhat, beta, _ = ch.synthesize_channel(cfg, (900, 120, 2), (850, 90, 400), np.random.default_rng(2))
    assert np.allclose(h, math.sqrt(beta) * hhat, rtol=1e-15, atol=0)


def test_below_d_min_is_an_error():
    cfg = default_scenario()
    with pytest.raises(ValueError):
        ch.synthesize_channel(cfg, (0, 0, 0), (0, 0, 0.5), np.random.default_rng(0))


def test_nlos_bank_is_frozen_and_order_independent():
    b1, b2 = ch.NlosBank(7, 4), ch.NlosBank(7, 4)
    x = b1.draw(2, 9)
    b2.draw(0, 0)
    assert np.array_equal(x, b2.draw(2, 9))
    assert np.array_equal(ch.NlosBank(7, 8).draw(2, 9)[:4], x)
    with pytest.raises(ValueError):
        x[0] = 0


def test_sinr_examples():
    h = np.array([[1 + 1j, 0.5]])
    w = np.array([[0.3, 0.2j]])
    expected = abs(np.conj(h[0]) @ w[0]) ** 2 / 0.01
    assert ch.sinr(h, w, 0, 0.01) == pytest.approx(expected)
    assert ch.sinr(h, np.zeros_like(w), 0, 0.01) == 0.0


def test_sinr_matches_explicit_sums():
    rng = np.random.default_rng(3)
    h, w = rand_complex(rng, 3, 4), rand_complex(rng, 3, 4)
    got = ch.sinr_all(h, w, 0.2)
    for n in range(3):
        sig = abs(sum(np.conj(h[n, m]) * w[n, m] for m in range(4))) ** 2
        intf = sum(abs(sum(np.conj(h[n, m]) * w[k, m] for m in range(4))) ** 2 for k in range(3) if k != n)
        assert got[n] == pytest.approx(sig / (intf + 0.2), rel=1e-12)


def test_sinr_matches_distance_decomposition():
    cfg = default_scenario()
    rng = np.random.default_rng(4)
    users = np.array([[800, 80, 1.0], [900, 150, 2.0], [950, 120, 0.7]])
    r = np.array([850.0, 100.0, 400.0])
    chans = ch.channels_at(cfg, users, r, 3, ch.NlosBank(1, 4))
    w = rand_complex(rng, 3, 4) * 0.3
    p = np.abs(np.conj(chans.hhat) @ w.T) ** 2
    kappa = cfg.noise_power / cfg.ref_gain
    for n in range(3):
        d = np.linalg.norm(users[n] - r)
        A, B = p[n, n], p[n].sum() - p[n, n]
        assert ch.sinr(chans.h, w, n, cfg.noise_power) == pytest.approx(A / (B + kappa * d ** 2.3), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.floats(0, 2 * math.pi), st.integers(0, 10 ** 6))
def test_sinr_invariant_to_beam_phase(k, phase, seed):
    rng = np.random.default_rng(seed)
    h, w = rand_complex(rng, 3, 4), rand_complex(rng, 3, 4)
    w2 = w.copy()
    w2[k] *= np.exp(1j * phase)
    assert np.allclose(ch.sinr_all(h, w, 0.1), ch.sinr_all(h, w2, 0.1), rtol=1e-10)
