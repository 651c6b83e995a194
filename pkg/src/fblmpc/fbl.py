"""Normal-approximation finite-blocklength rate (natural log units)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def q_func(x: float) -> float:
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def inv_q(eps: float) -> float:
    """Inverse of Q by safeguarded Newton iteration inside a shrinking bracket.

    Accurate to about 1e-13 in x for eps in (0, 1).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"inv_q needs eps in (0, 1), got {eps}")
    if eps == 0.5:
        return 0.0
    lo, hi = -40.0, 40.0  # Q(lo) > eps > Q(hi)
    x = 0.0
    for _ in range(200):
        fx = q_func(x) - eps
        if fx > 0:
            lo = x
        else:
            hi = x
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = fx / pdf if pdf > 0 else math.inf
        nxt = x + step  # Q' = -pdf
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-15 * max(1.0, abs(x)) or hi - lo <= 1e-15:
            return nxt
        x = nxt
    return x


@dataclass(frozen=True)
class FblParams:
    blocklength: float
    error_prob: float

    @property
    def c(self) -> float:
        """Penalty constant Q^-1(eps) / sqrt(L)."""
        if math.isinf(self.blocklength):
            return 0.0
        return inv_q(self.error_prob) / math.sqrt(self.blocklength)

    @classmethod
    def from_config(cls, cfg) -> "FblParams":
        return cls(cfg.blocklength, cfg.error_prob)


def dispersion(gamma):
    return 1.0 - (1.0 + np.asarray(gamma, dtype=float)) ** -2


def penalty(gamma, c: float):
    return c * np.sqrt(dispersion(gamma))


def fbl_rate(gamma, params) -> np.ndarray:
    """ln(1 + gamma) - c*sqrt(V(gamma)); negative values are returned as-is."""
    c = params if isinstance(params, float) else params.c
    gamma = np.asarray(gamma, dtype=float)
    return np.log1p(gamma) - c * np.sqrt(dispersion(gamma))
