"""Rotary-wing propulsion power, communication power and the convex upper surrogate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PropulsionParams:
    weight: float       # W_N, N
    air_density: float  # kg/m^3
    rotor_area: float   # m^2
    drag_coeff: float   # zeta

    def __post_init__(self):
        for name in ("weight", "air_density", "rotor_area"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.drag_coeff < 0:
            raise ValueError("drag_coeff must be nonnegative")

    @classmethod
    def from_config(cls, cfg) -> "PropulsionParams":
        return cls(cfg.uav_weight, cfg.air_density, cfg.rotor_area, cfg.drag_coeff)

    @property
    def v_hover(self) -> float:
        return math.sqrt(self.weight / (2.0 * self.air_density * self.rotor_area))

    @property
    def induced_coeff(self) -> float:
        """K in K * Psi^-1/2."""
        return self.weight ** 2 / (math.sqrt(2.0) * self.air_density * self.rotor_area)

    @property
    def parasite_coeff(self) -> float:
        return self.drag_coeff * self.air_density * self.rotor_area / 8.0

    @property
    def hover_power(self) -> float:
        return self.weight ** 1.5 / math.sqrt(2.0 * self.air_density * self.rotor_area)


def psi(vh_sq, v_hover: float):
    """Psi as a function of the squared horizontal speed."""
    vh_sq = np.asarray(vh_sq, dtype=float)
    return vh_sq + np.sqrt(vh_sq ** 2 + 4.0 * v_hover ** 4)


def propulsion_power(v, p: PropulsionParams) -> float:
    v = np.asarray(v, dtype=float)
    s = float(v[0] ** 2 + v[1] ** 2)
    induced = p.induced_coeff / math.sqrt(float(psi(s, p.v_hover)))
    return induced + p.weight * max(float(v[2]), 0.0) + p.parasite_coeff * s ** 1.5


def comm_power(beams, eta: float) -> float:
    if not 0.0 < eta <= 1.0:
        raise ValueError("amplifier efficiency must lie in (0, 1]")
    beams = np.asarray(beams)
    return float(np.sum(np.abs(beams) ** 2)) / eta


def total_power(v, beams, p: PropulsionParams, eta: float) -> float:
    return propulsion_power(v, p) + comm_power(beams, eta)


def mission_energy(powers, t_c: float) -> float:
    """Energy in J of a per-step total power trace."""
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0:
        raise ValueError("empty power trace")
    return float(np.sum(powers) * t_c)


class DomainFloorError(ValueError):
    pass


@dataclass(frozen=True)
class PropulsionSurrogate:
    a: float
    g: np.ndarray      # (2,)
    v_ref: np.ndarray  # (2,)
    params: PropulsionParams

    @property
    def floor(self) -> float:
        return 1e-6 * self.a

    def affine(self, vh) -> float:
        vh = np.asarray(vh, dtype=float)[:2]
        return self.a + float(self.g @ (vh - self.v_ref))


def propulsion_surrogate(v_ref, p: PropulsionParams) -> PropulsionSurrogate:
    """First-order lower model of Psi at ``v_ref`` (horizontal velocity)."""
    v_ref = np.array(v_ref, dtype=float)[:2]
    s = float(v_ref @ v_ref)
    a = float(psi(s, p.v_hover))
    g = 2.0 * (1.0 + s / math.sqrt(s * s + 4.0 * p.v_hover ** 4)) * v_ref
    g.setflags(write=False)
    v_ref.setflags(write=False)
    return PropulsionSurrogate(a, g, v_ref, p)


def eval_ub(s: PropulsionSurrogate, v) -> float:
    """Convex upper bound of the propulsion power at ``v``."""
    v = np.asarray(v, dtype=float)
    lin = s.affine(v)
    if lin < s.floor:
        raise DomainFloorError(
            f"surrogate argument {lin:.6g} below floor {s.floor:.3g} at v={v.tolist()}")
    p = s.params
    sq = float(v[0] ** 2 + v[1] ** 2)
    return p.induced_coeff / math.sqrt(lin) + p.weight * max(float(v[2]), 0.0) + p.parasite_coeff * sq ** 1.5
