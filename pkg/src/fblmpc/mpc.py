"""Receding-horizon mission loop, disturbances and trace serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import channel as ch
from .fbl import FblParams, fbl_rate
from .optimizer import (InfeasibleInit, Window, ao_loop, slot_budget)
from .propulsion import PropulsionParams, comm_power, mission_energy, propulsion_power
from .scenario import ScenarioConfig, UserSet

TRACE_SCHEMA_VERSION = 1


def disturbance(rng: np.random.Generator, delta: float, mode: str = "uniform-ball") -> np.ndarray:
    """Random displacement with norm at most ``delta``.

    Direction is uniform on the sphere; the magnitude is uniform on [0, delta]
    (``uniform-ball``) or exactly delta (``fixed-magnitude``).  Two draws are
    taken for every call, whatever delta is, so streams stay aligned.
    """
    z = rng.standard_normal(3)
    mag_u = rng.uniform()
    if delta <= 0:
        return np.zeros(3)
    nrm = np.linalg.norm(z)
    direction = z / nrm if nrm > 0 else np.array([1.0, 0.0, 0.0])
    mag = delta if mode == "fixed-magnitude" else delta * mag_u
    return direction * mag


@dataclass
class StepRecord:
    t: int
    r: np.ndarray            # position before the control
    v_prev: np.ndarray
    v: np.ndarray            # applied velocity
    w: np.ndarray            # applied beams (N, M)
    dist: np.ndarray         # applied displacement (after box clamping)
    r_next: np.ndarray
    gamma: np.ndarray
    rate: np.ndarray
    p_prop: float
    p_com: float
    phi: float = math.nan
    ao_iters: int = 0
    ao_stop: str = ""
    phi_history: list = field(default_factory=list)
    fallback: str = ""

    @property
    def p_tot(self) -> float:
        return self.p_prop + self.p_com


@dataclass
class MissionTrace:
    scheme: str
    cfg: ScenarioConfig
    users: np.ndarray
    r_start: np.ndarray
    steps: list = field(default_factory=list)
    termination: str = ""

    @property
    def positions(self) -> np.ndarray:
        if not self.steps:
            return self.r_start[None, :]
        return np.vstack([self.steps[0].r] + [s.r_next for s in self.steps])

    @property
    def final_position(self) -> np.ndarray:
        return self.steps[-1].r_next if self.steps else self.r_start

    @property
    def terminal_distance(self) -> float:
        return float(np.linalg.norm(self.final_position - np.array(self.cfg.r_b)))

    @property
    def energy(self) -> float:
        if not self.steps:
            return 0.0
        return mission_energy([s.p_tot for s in self.steps], self.cfg.t_c)

    def rates(self) -> np.ndarray:
        return np.array([s.rate for s in self.steps]).reshape(len(self.steps), -1)

    def summary(self) -> dict:
        rates = self.rates()
        from .baselines import qos_satisfaction
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "scheme": self.scheme,
            "steps": len(self.steps),
            "termination": self.termination,
            "terminal_distance_m": self.terminal_distance,
            "energy_j": self.energy,
            "mean_sum_rate_nats": float(rates.sum(axis=1).mean()) if len(rates) else 0.0,
            "mean_min_rate_nats": float(rates.min(axis=1).mean()) if len(rates) else 0.0,
            "qos_satisfaction_pct": qos_satisfaction(self, self.cfg.r_min) if len(rates) else 0.0,
            "fallback_steps": sum(1 for s in self.steps if s.fallback),
        }

    def csv_columns(self) -> list[str]:
        n = len(self.users)
        cols = ["t"]
        for name in ("r", "v", "dist", "r_next"):
            cols += [f"{name}_{a}" for a in "xyz"]
        cols += ["p_prop", "p_com", "p_tot", "phi", "ao_iters", "fallback"]
        cols += [f"gamma_{k}" for k in range(n)] + [f"rate_{k}" for k in range(n)]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={TRACE_SCHEMA_VERSION}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.csv_columns())
        for s in self.steps:
            row = [s.t, *map(repr, s.r.tolist()), *map(repr, s.v.tolist()), *map(repr, s.dist.tolist()),
                   *map(repr, s.r_next.tolist()), repr(s.p_prop), repr(s.p_com), repr(s.p_tot),
                   repr(s.phi), s.ao_iters, s.fallback]
            row += [repr(float(x)) for x in s.gamma] + [repr(float(x)) for x in s.rate]
            wr.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _box_clamp(r, cfg) -> np.ndarray:
    lo = np.array([cfg.x_range[0], cfg.y_range[0], cfg.altitude_range[0]])
    hi = np.array([cfg.x_range[1], cfg.y_range[1], cfg.altitude_range[1]])
    return np.minimum(np.maximum(r, lo), hi)


def applied_displacement(r, v, d, cfg) -> np.ndarray:
    """Disturbance actually realized once the position is kept inside the flight box."""
    nominal = r + v * cfg.t_c
    landed = _box_clamp(nominal + d, cfg)
    return landed - nominal


def control_violations(cfg: ScenarioConfig, r, v_prev, v, w) -> list[str]:
    """C2-C7 re-check of one applied control (C2 on the undisturbed next position)."""
    tol = 1e-6
    out = []
    nxt = r + v * cfg.t_c
    if not (cfg.x_range[0] - tol <= nxt[0] <= cfg.x_range[1] + tol
            and cfg.y_range[0] - tol <= nxt[1] <= cfg.y_range[1] + tol
            and cfg.altitude_range[0] - tol <= nxt[2] <= cfg.altitude_range[1] + tol):
        out.append("C2")
    if math.hypot(v[0], v[1]) > cfg.v_max + tol:
        out.append("C3")
    if abs(v[2]) > cfg.u_max + tol:
        out.append("C4")
    if np.linalg.norm(v - v_prev) > cfg.a_max * cfg.t_c + tol:
        out.append("C5")
    pc = comm_power(w, cfg.amp_efficiency)
    if propulsion_power(v, PropulsionParams.from_config(cfg)) + pc > cfg.p_max + tol:
        out.append("C6")
    if pc > cfg.p_com_max + tol:
        out.append("C7")
    return out


def braking_control(cfg: ScenarioConfig, r, v_prev, w_prev):
    """Slow toward hover within the acceleration limit, keeping the previous beams.

    Beams are scaled down if the propulsion power at the new speed leaves
    less room than they need.
    """
    lim = cfg.a_max * cfg.t_c
    sp = float(np.linalg.norm(v_prev))
    v = v_prev * (1.0 - lim / sp) if sp > lim else np.zeros(3)
    # stay inside the box: cancel components that would leave it
    nxt = r + v * cfg.t_c
    if not np.allclose(_box_clamp(nxt, cfg), nxt):
        v = np.zeros(3) if sp <= lim else v
    budget = slot_budget(cfg, v)
    w = w_prev
    pw = float(np.sum(np.abs(w) ** 2))
    if pw > budget:
        w = w * math.sqrt(budget / pw) if pw > 0 else w
    return v, w


def _evaluate(cfg, users, r, t, bank, w):
    chans = ch.channels_at(cfg, users, r, t, bank)
    gam = ch.sinr_all(chans.h, w, cfg.noise_power)
    return gam, fbl_rate(gam, FblParams.from_config(cfg).c)


def run_mission(cfg: ScenarioConfig, users, rng: np.random.Generator, nlos_key: int = 0,
                scheme: str = "online-mpc", disturb: bool = True,
                horizon: Optional[int] = None) -> MissionTrace:
    """Closed-loop receding-horizon mission from r_A until arrival or the step cap."""
    pos = users.positions if isinstance(users, UserSet) else np.asarray(users, dtype=float)
    bank = ch.NlosBank(nlos_key, cfg.num_antennas)
    pp = PropulsionParams.from_config(cfg)
    rb = np.array(cfg.r_b)
    r = np.array(cfg.r_a, dtype=float)
    v_prev = np.array(cfg.init_velocity, dtype=float)
    w_prev = np.zeros((len(pos), cfg.num_antennas), dtype=complex)
    trace = MissionTrace(scheme, cfg, pos, r.copy())
    H = cfg.horizon if horizon is None else horizon
    shifted = None
    t = 0
    while True:
        if np.linalg.norm(r - rb) <= cfg.arrival_tol:
            trace.termination = "arrived"
            break
        if t >= cfg.mission_cap:
            trace.termination = "step-cap"
            break
        win = Window(cfg, pos, bank, t, r, v_prev, H)
        rec_extra = {}
        try:
            beams, traj, state = ao_loop(win, alt_velocities=shifted)
            v, w = traj.v[0].copy(), beams.w[0].copy()
            shifted = np.vstack([traj.v[1:], traj.v[-1:]])
            rec_extra = dict(phi=state.phi, ao_iters=len(state.records), ao_stop=state.stop_reason,
                             phi_history=list(state.phi_history))
            bad = control_violations(cfg, r, v_prev, v, w)
            if bad:
                raise InfeasibleInit(bad[0], "applied control re-check")
        except InfeasibleInit as exc:
            v, w = braking_control(cfg, r, v_prev, w_prev)
            rec_extra = dict(fallback=f"{exc.family}")
            shifted = None
        d = disturbance(rng, cfg.disturbance, cfg.disturbance_mode) if disturb else np.zeros(3)
        d = applied_displacement(r, v, d, cfg)
        r_next = r + v * cfg.t_c + d
        gam, rate = _evaluate(cfg, pos, r, t, bank, w)
        trace.steps.append(StepRecord(t, r.copy(), v_prev.copy(), v, w, d, r_next, gam, rate,
                                      propulsion_power(v, pp), comm_power(w, cfg.amp_efficiency),
                                      **rec_extra))
        r, v_prev, w_prev = r_next, v, w
        t += 1
    return trace


def replay_positions(trace: MissionTrace) -> np.ndarray:
    """Positions rebuilt from r_A, the applied velocities and displacements."""
    r = trace.r_start.copy()
    out = [r]
    for s in trace.steps:
        r = r + s.v * trace.cfg.t_c + s.dist
        out.append(r)
    return np.array(out)
