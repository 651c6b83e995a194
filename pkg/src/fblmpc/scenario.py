"""Scenario parameters, config documents, user placement and RNG streams."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Raised for unparsable config documents or violated parameter invariants."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


Vec3 = tuple  # (x, y, z) in meters


@dataclass(frozen=True)
class ScenarioConfig:
    num_users: int = 3
    num_antennas: int = 4
    corridor_width: float = 200.0
    user_height_range: tuple = (0.5, 3.0)
    r_a: Vec3 = (750.0, 50.0, 500.0)
    r_b: Vec3 = (1000.0, 200.0, 300.0)
    t_c: float = 1.0
    horizon: int = 5
    v_max: float = 15.0
    u_max: float = 10.0
    a_max: float = 4.0
    altitude_range: tuple = (100.0, 900.0)
    x_range: tuple = (-1500.0, 1500.0)
    y_range: tuple = (-1500.0, 1500.0)
    bandwidth: float = 5e6
    noise_psd_dbm: float = -174.0
    ref_gain: float = 1e-3
    pathloss_exponent: float = 2.3
    rician_k_db: float = 6.0
    blocklength: float = 1000.0
    error_prob: float = 1e-5
    p_com_max: float = 1.0
    p_max: float = 230.0
    amp_efficiency: float = 0.5
    uav_weight: float = 39.2
    air_density: float = 1.225
    rotor_area: float = 0.503
    drag_coeff: float = 0.08
    # None means "derive from the scenario", see ``weights``.
    psi_rate: Optional[float] = None
    psi_dist: Optional[float] = None
    psi_prop: Optional[float] = None
    ao_max_iters: int = 10
    arrival_tol: float = 5.0
    disturbance: float = 0.0
    disturbance_mode: str = "uniform-ball"
    d_min: float = 1.0
    d_max: float = 2000.0
    mission_cap: int = 30
    r_min: float = 0.1
    rng_seed: int = 0
    solver_tol: float = 1e-8
    solver_max_iter: int = 200
    ao_stop_on_decrease: bool = True
    init_velocity: Vec3 = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        for name in ("r_a", "r_b", "init_velocity", "user_height_range",
                     "altitude_range", "x_range", "y_range"):
            object.__setattr__(self, name, tuple(float(c) for c in getattr(self, name)))
        problems = _violations(self)
        if problems:
            raise ConfigError(problems)

    # -- derived quantities -------------------------------------------------

    @property
    def noise_power(self) -> float:
        """Receiver noise power in W from the PSD and the bandwidth."""
        return 10.0 ** ((self.noise_psd_dbm + 10.0 * math.log10(self.bandwidth) - 30.0) / 10.0)

    @property
    def rician_k(self) -> float:
        return 10.0 ** (self.rician_k_db / 10.0)

    @property
    def hover_power(self) -> float:
        return self.uav_weight ** 1.5 / math.sqrt(2.0 * self.air_density * self.rotor_area)

    def weights(self) -> tuple[float, float, float]:
        """Objective weights (rate, distance, propulsion) with derived defaults."""
        span2 = float(np.sum((np.array(self.r_a) - np.array(self.r_b)) ** 2))
        psi1 = 1.0 if self.psi_rate is None else self.psi_rate
        psi2 = 1.0 / max(span2, 1.0) if self.psi_dist is None else self.psi_dist
        psi3 = 1.0 / self.hover_power if self.psi_prop is None else self.psi_prop
        return psi1, psi2, psi3

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _violations(cfg: ScenarioConfig) -> list[str]:
    out = []

    def need(cond, name, what):
        if not cond:
            out.append(f"{name}: {what} (got {getattr(cfg, name)!r})")

    need(int(cfg.num_users) == cfg.num_users and cfg.num_users >= 1, "num_users", "must be an integer >= 1")
    need(int(cfg.num_antennas) == cfg.num_antennas and cfg.num_antennas >= 1, "num_antennas", "must be an integer >= 1")
    need(int(cfg.horizon) == cfg.horizon and cfg.horizon >= 1, "horizon", "must be an integer >= 1")
    need(0.0 < cfg.error_prob < 0.5, "error_prob", "must lie in (0, 0.5)")
    need(cfg.blocklength >= 1, "blocklength", "must be >= 1")
    need(cfg.d_min > 0, "d_min", "must be > 0")
    need(cfg.d_max > cfg.d_min, "d_max", "must exceed d_min")
    need(len(cfg.altitude_range) == 2 and cfg.altitude_range[0] < cfg.altitude_range[1],
         "altitude_range", "Z_min must be < Z_max")
    need(len(cfg.x_range) == 2 and cfg.x_range[0] < cfg.x_range[1], "x_range", "X_min must be < X_max")
    need(len(cfg.y_range) == 2 and cfg.y_range[0] < cfg.y_range[1], "y_range", "Y_min must be < Y_max")
    need(len(cfg.user_height_range) == 2 and 0 <= cfg.user_height_range[0] <= cfg.user_height_range[1],
         "user_height_range", "must be an ordered nonnegative pair")
    for name in ("t_c", "v_max", "u_max", "a_max", "bandwidth", "ref_gain", "p_com_max", "p_max",
                 "uav_weight", "air_density", "rotor_area", "corridor_width", "arrival_tol"):
        need(getattr(cfg, name) > 0, name, "must be > 0")
    need(0.0 < cfg.amp_efficiency <= 1.0, "amp_efficiency", "must lie in (0, 1]")
    need(cfg.drag_coeff >= 0, "drag_coeff", "must be >= 0")
    need(cfg.pathloss_exponent > 0, "pathloss_exponent", "must be > 0")
    for name in ("psi_rate", "psi_dist", "psi_prop"):
        val = getattr(cfg, name)
        need(val is None or val >= 0, name, "must be >= 0")
    need(cfg.ao_max_iters >= 0, "ao_max_iters", "must be >= 0")
    need(cfg.mission_cap >= 0, "mission_cap", "must be >= 0")
    need(cfg.disturbance >= 0, "disturbance", "must be >= 0")
    need(cfg.disturbance_mode in ("uniform-ball", "fixed-magnitude"), "disturbance_mode",
         "must be 'uniform-ball' or 'fixed-magnitude'")
    need(cfg.solver_tol > 0, "solver_tol", "must be > 0")
    need(cfg.solver_max_iter >= 1, "solver_max_iter", "must be >= 1")
    for name in ("r_a", "r_b", "init_velocity"):
        need(len(getattr(cfg, name)) == 3, name, "must have three components")
    return out


def default_scenario() -> ScenarioConfig:
    return ScenarioConfig()


# -- config documents ---------------------------------------------------------

# document key -> (field name, kind)
_KEYS = {
    "num_users": ("num_users", "int"),
    "num_antennas": ("num_antennas", "int"),
    "corridor_width_m": ("corridor_width", "float"),
    "user_height_range_m": ("user_height_range", "vec"),
    "r_A_m": ("r_a", "vec"),
    "r_B_m": ("r_b", "vec"),
    "t_c_s": ("t_c", "float"),
    "horizon_slots": ("horizon", "int"),
    "v_max_mps": ("v_max", "float"),
    "u_max_mps": ("u_max", "float"),
    "a_max_mps2": ("a_max", "float"),
    "altitude_range_m": ("altitude_range", "vec"),
    "x_range_m": ("x_range", "vec"),
    "y_range_m": ("y_range", "vec"),
    "bandwidth_hz": ("bandwidth", "float"),
    "noise_psd_dbm_per_hz": ("noise_psd_dbm", "float"),
    "ref_gain_1m_linear": ("ref_gain", "float"),
    "pathloss_exponent": ("pathloss_exponent", "float"),
    "rician_k_db": ("rician_k_db", "float"),
    "blocklength_channel_uses": ("blocklength", "float"),
    "error_prob": ("error_prob", "float"),
    "p_com_max_w": ("p_com_max", "float"),
    "p_max_w": ("p_max", "float"),
    "amp_efficiency": ("amp_efficiency", "float"),
    "uav_weight_n": ("uav_weight", "float"),
    "air_density_kg_per_m3": ("air_density", "float"),
    "rotor_area_m2": ("rotor_area", "float"),
    "drag_coeff": ("drag_coeff", "float"),
    "psi_rate": ("psi_rate", "weight"),
    "psi_dist_per_m2": ("psi_dist", "weight"),
    "psi_prop_per_w": ("psi_prop", "weight"),
    "ao_max_iters": ("ao_max_iters", "int"),
    "arrival_tol_m": ("arrival_tol", "float"),
    "disturbance_m": ("disturbance", "float"),
    "disturbance_mode": ("disturbance_mode", "str"),
    "d_min_m": ("d_min", "float"),
    "d_max_m": ("d_max", "float"),
    "mission_cap_slots": ("mission_cap", "int"),
    "r_min_nats": ("r_min", "float"),
    "rng_seed": ("rng_seed", "int"),
    "solver_tol": ("solver_tol", "float"),
    "solver_max_iter": ("solver_max_iter", "int"),
    "ao_stop_on_decrease": ("ao_stop_on_decrease", "bool"),
    "init_velocity_mps": ("init_velocity", "vec"),
}
_FIELD_TO_KEY = {fname: key for key, (fname, _) in _KEYS.items()}


def _parse_value(kind, raw):
    if kind == "int":
        val = float(raw)
        if val != int(val):
            raise ValueError("expected an integer")
        return int(val)
    if kind == "float":
        return float(raw)
    if kind == "vec":
        return tuple(float(p) for p in raw.split(","))
    if kind == "weight":
        return None if raw.strip().lower() == "auto" else float(raw)
    if kind == "bool":
        low = raw.strip().lower()
        if low not in ("true", "false"):
            raise ValueError("expected true or false")
        return low == "true"
    return raw.strip()


def load_scenario(text: str) -> ScenarioConfig:
    """Parse a flat ``key = value`` document; omitted keys keep their defaults.

    Raises ConfigError naming each offending key or field.
    """
    values = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        fname, kind = _KEYS[key]
        if fname in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[fname] = _parse_value(kind, raw)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(**values)


def _format_value(val):
    if val is None:
        return "auto"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ", ".join(repr(float(v)) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def dump_scenario(cfg: ScenarioConfig) -> str:
    lines = ["# fblmpc scenario (units in key names)"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


# -- RNG streams and users ----------------------------------------------------

@dataclass
class RngStreams:
    """Independent per-run random streams.

    ``users`` places users, ``disturbance`` drives position disturbances and
    ``nlos_key`` keys the frozen NLoS draws (see ``channel.NlosBank``).
    """
    seed: int
    users: np.random.Generator
    disturbance: np.random.Generator
    nlos_key: int


def make_streams(seed: int, disturbance_seed: Optional[int] = None) -> RngStreams:
    dseed = seed if disturbance_seed is None else disturbance_seed
    return RngStreams(
        seed=seed,
        users=np.random.default_rng([seed, 0]),
        disturbance=np.random.default_rng([dseed, 2]),
        nlos_key=int(seed),
    )


@dataclass(frozen=True)
class UserSet:
    positions: np.ndarray  # (N, 3)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)


def place_users(cfg: ScenarioConfig, rng: np.random.Generator) -> UserSet:
    """Uniform users in the corridor around the horizontal r_A -> r_B segment."""
    a = np.array(cfg.r_a[:2])
    b = np.array(cfg.r_b[:2])
    axis = b - a
    length = np.linalg.norm(axis)
    unit = axis / length if length > 0 else np.array([1.0, 0.0])
    normal = np.array([-unit[1], unit[0]])
    n = cfg.num_users
    along = rng.uniform(0.0, 1.0, n) * length
    across = rng.uniform(-0.5, 0.5, n) * cfg.corridor_width
    heights = rng.uniform(cfg.user_height_range[0], cfg.user_height_range[1], n)
    xy = a + along[:, None] * unit + across[:, None] * normal
    return UserSet(np.column_stack([xy, heights]))
