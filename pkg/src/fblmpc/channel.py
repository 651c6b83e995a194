"""Geometry, pathloss, ULA steering vectors, Rician channels and SINR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig


@dataclass(frozen=True)
class UavState:
    r: np.ndarray  # position, m
    v: np.ndarray  # velocity, m/s


def distance(u, r) -> float:
    return float(np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(r, dtype=float)))


def pathloss(b0: float, rho: float, d):
    """Large-scale gain ``b0 * d**-rho``; ``d`` must be positive."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("pathloss needs a positive distance")
    out = b0 * d ** (-rho)
    return float(out) if out.ndim == 0 else out


def steering_vector(m: int, cos_theta: float) -> np.ndarray:
    """Half-wavelength ULA response: entry k is exp(j*k*pi*cos_theta)."""
    if not -1.0 - 1e-12 <= cos_theta <= 1.0 + 1e-12:
        raise ValueError(f"cos(theta) out of range: {cos_theta}")
    return np.exp(1j * np.pi * np.arange(m) * cos_theta)


def rician_mix(k_linear: float) -> tuple[float, float]:
    """LoS and NLoS amplitude weights for a (possibly infinite) K-factor."""
    if np.isinf(k_linear):
        return 1.0, 0.0
    return float(np.sqrt(k_linear / (k_linear + 1.0))), float(np.sqrt(1.0 / (k_linear + 1.0)))


class NlosBank:
    """Frozen CN(0, I) NLoS draws keyed by (user, absolute step).

    Each draw comes from its own seeded generator, so values do not depend on
    the order of requests, and a longer array shares its leading entries with
    a shorter one (nested antenna sweeps see the same first M entries).
    """

    def __init__(self, key: int, num_antennas: int):
        self.key = int(key)
        self.num_antennas = int(num_antennas)
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def draw(self, user: int, step: int) -> np.ndarray:
        ck = (user, step)
        g = self._cache.get(ck)
        if g is None:
            g = draw_nlos(np.random.default_rng([self.key, 1, user, step]), self.num_antennas)
            g.setflags(write=False)
            self._cache[ck] = g
        return g


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user channels of one time slot (rows index users)."""
    h: np.ndarray          # (N, M) complex
    hhat: np.ndarray       # (N, M) complex, normalized part
    beta: np.ndarray       # (N,) linear pathloss
    g: np.ndarray          # (N, M) NLoS draws
    cos_theta: np.ndarray  # (N,)


def draw_nlos(rng: np.random.Generator, m: int) -> np.ndarray:
    z = rng.standard_normal((m, 2))
    return (z[:, 0] + 1j * z[:, 1]) / np.sqrt(2.0)


def synthesize_channel(cfg: ScenarioConfig, u, r, g) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Channel of one user: returns (h, hhat, beta, cos_theta).

    ``g`` is either the frozen NLoS vector of this user and step or a
    generator from which a fresh CN(0, I) draw is taken.
    """
    if isinstance(g, np.random.Generator):
        g = draw_nlos(g, cfg.num_antennas)
    u = np.asarray(u, dtype=float)
    r = np.asarray(r, dtype=float)
    d = distance(u, r)
    if d < cfg.d_min:
        raise ValueError(f"UAV-user distance {d:.3g} m is below d_min={cfg.d_min}")
    cos_t = float(np.clip((u[0] - r[0]) / d, -1.0, 1.0))
    los_w, nlos_w = rician_mix(cfg.rician_k)
    a = steering_vector(cfg.num_antennas, cos_t)
    g = np.asarray(g)[: cfg.num_antennas]
    hhat = los_w * a + nlos_w * g
    beta = pathloss(cfg.ref_gain, cfg.pathloss_exponent, d)
    return np.sqrt(beta) * hhat, hhat, beta, cos_t


def channels_at(cfg: ScenarioConfig, users, r, step: int, bank: NlosBank) -> ChannelRealization:
    """All users' channels with the UAV at ``r`` during absolute step ``step``."""
    pos = users.positions if hasattr(users, "positions") else np.asarray(users)
    rows = []
    for n, u in enumerate(pos):
        g = bank.draw(n, step)[: cfg.num_antennas]
        rows.append((*synthesize_channel(cfg, u, r, g), g))
    h, hhat, beta, cos_t, g = zip(*rows)
    return ChannelRealization(np.array(h), np.array(hhat), np.array(beta), np.array(g), np.array(cos_t))


def gram(h_all: np.ndarray, w: np.ndarray) -> np.ndarray:
    """|h_n^H w_k|^2 as an (N, N) array, rows receivers and columns beams."""
    return np.abs(np.conj(h_all) @ w.T) ** 2


def sinr(h_all, w, n: int, noise: float) -> float:
    if noise <= 0:
        raise ValueError("noise power must be positive")
    p = gram(np.asarray(h_all), np.asarray(w))
    interference = p[n].sum() - p[n, n]
    return float(p[n, n] / (interference + noise))


def sinr_all(h_all, w, noise: float) -> np.ndarray:
    p = gram(np.asarray(h_all), np.asarray(w))
    sig = np.diag(p)
    return sig / (p.sum(axis=1) - sig + noise)
