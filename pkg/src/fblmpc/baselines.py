"""Comparison schemes: open-loop planners and fixed-trajectory beamformers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channel as ch
from .fbl import FblParams, fbl_rate
from .mpc import (MissionTrace, StepRecord, _evaluate, applied_displacement, disturbance,
                  run_mission)
from .optimizer import (Window, ao_loop, p2_slot, p2init_slot, slot_budget)
from .propulsion import PropulsionParams, comm_power, propulsion_power
from .scenario import ScenarioConfig, UserSet


class BaselineKind(str, enum.Enum):
    OFFLINE_MPC = "offline-mpc"
    OFFLINE_JOINT = "offline-joint"
    BF_MRT = "bf-mrt"
    BF_ZF = "bf-zf"
    BF_EQUAL = "bf-equal"
    BF_PROPOSED = "bf-proposed"


BEAM_KINDS = (BaselineKind.BF_PROPOSED, BaselineKind.BF_ZF, BaselineKind.BF_MRT, BaselineKind.BF_EQUAL)


class DegenerateBaseline(ValueError):
    """The requested beamformer does not exist for this channel."""


def _positions(users) -> np.ndarray:
    return users.positions if isinstance(users, UserSet) else np.asarray(users, dtype=float)


# -- open-loop execution ---------------------------------------------------------

def execute_open_loop(cfg: ScenarioConfig, users, rng: np.random.Generator, nlos_key: int,
                      controls, scheme: str, diagnostics=None, disturb: bool = True) -> MissionTrace:
    """Apply a precomputed (v, w) sequence against the disturbed dynamics.

    Stops on arrival or when the sequence runs out ("plan-exhausted").
    Rates are evaluated at the positions actually reached.
    """
    pos = _positions(users)
    bank = ch.NlosBank(nlos_key, cfg.num_antennas)
    pp = PropulsionParams.from_config(cfg)
    rb = np.array(cfg.r_b)
    r = np.array(cfg.r_a, dtype=float)
    v_prev = np.array(cfg.init_velocity, dtype=float)
    trace = MissionTrace(scheme, cfg, pos, r.copy())
    diagnostics = diagnostics or [{}] * len(controls)
    for t, (v, w) in enumerate(controls):
        if np.linalg.norm(r - rb) <= cfg.arrival_tol:
            trace.termination = "arrived"
            return trace
        d = disturbance(rng, cfg.disturbance, cfg.disturbance_mode) if disturb else np.zeros(3)
        d = applied_displacement(r, v, d, cfg)
        r_next = r + v * cfg.t_c + d
        gam, rate = _evaluate(cfg, pos, r, t, bank, w)
        trace.steps.append(StepRecord(t, r.copy(), v_prev.copy(), v.copy(), w.copy(), d, r_next, gam, rate,
                                      propulsion_power(v, pp), comm_power(w, cfg.amp_efficiency),
                                      **diagnostics[t]))
        r, v_prev = r_next, v
    trace.termination = "arrived" if np.linalg.norm(r - rb) <= cfg.arrival_tol else "plan-exhausted"
    return trace


def run_offline_mpc(cfg: ScenarioConfig, users, rng: np.random.Generator, nlos_key: int = 0,
                    horizon: Optional[int] = None) -> MissionTrace:
    """Receding-horizon plan on the predicted (undisturbed) state, then flown open-loop."""
    nominal = run_mission(cfg, users, rng, nlos_key, scheme="offline-mpc-plan", disturb=False,
                          horizon=horizon)
    controls = [(s.v, s.w) for s in nominal.steps]
    diag = [dict(phi=s.phi, ao_iters=s.ao_iters, ao_stop=s.ao_stop, phi_history=list(s.phi_history),
                 fallback=s.fallback) for s in nominal.steps]
    trace = execute_open_loop(cfg, users, rng, nlos_key, controls, "offline-mpc", diag)
    if nominal.termination != "arrived" and trace.termination == "plan-exhausted":
        trace.termination = nominal.termination
    return trace


def run_offline_joint(cfg: ScenarioConfig, users, rng: np.random.Generator, nlos_key: int = 0,
                      slots: Optional[int] = None) -> MissionTrace:
    """One alternating solve over the whole mission, flown open-loop."""
    pos = _positions(users)
    T = cfg.mission_cap if slots is None else slots
    bank = ch.NlosBank(nlos_key, cfg.num_antennas)
    win = Window(cfg, pos, bank, 0, np.array(cfg.r_a, dtype=float),
                 np.array(cfg.init_velocity, dtype=float), T)
    beams, traj, state = ao_loop(win)
    controls = [(traj.v[k].copy(), beams.w[k].copy()) for k in range(T)]
    diag = [dict(phi=state.phi, ao_iters=len(state.records), ao_stop=state.stop_reason,
                 phi_history=list(state.phi_history))] + [{}] * (T - 1)
    return execute_open_loop(cfg, users, rng, nlos_key, controls, "offline-joint", diag)


# -- fixed-trajectory beamformers -------------------------------------------------

def _per_user(direction: np.ndarray, budget: float) -> np.ndarray:
    n_users = direction.shape[0]
    norms = np.linalg.norm(direction, axis=1)
    if np.any(norms == 0):
        raise DegenerateBaseline("zero-norm beam direction")
    return math.sqrt(budget / n_users) * direction / norms[:, None]


def beamform_baseline(kind, h: np.ndarray, cfg: ScenarioConfig, budget: Optional[float] = None) -> np.ndarray:
    """Conventional beams for one slot (``h`` is (N, M)) or a stack of slots ((T, N, M)).

    ``budget`` is the allowed sum of ||w_n||^2; the default is eta * P_com_max.
    Each user receives an equal share.
    """
    kind = BaselineKind(kind)
    h = np.asarray(h, dtype=complex)
    if h.ndim == 3:
        return np.array([beamform_baseline(kind, hk, cfg, budget) for hk in h])
    b = cfg.amp_efficiency * cfg.p_com_max if budget is None else budget
    n_users, m = h.shape
    if kind is BaselineKind.BF_MRT:
        return _per_user(h, b)
    if kind is BaselineKind.BF_EQUAL:
        return np.full((n_users, m), math.sqrt(b / (n_users * m)), dtype=complex)
    if kind is BaselineKind.BF_ZF:
        if m < n_users:
            raise DegenerateBaseline(f"zero-forcing needs M >= N (M={m}, N={n_users})")
        H = np.conj(h)
        if np.linalg.matrix_rank(H) < n_users:
            raise DegenerateBaseline("rank-deficient channel stack")
        P = np.linalg.pinv(H)  # H @ P = I
        return _per_user(P.T, b)
    raise ValueError(f"{kind.value} is not a conventional beamformer")


def proposed_beams(h: np.ndarray, budget: float, cfg: ScenarioConfig, iters: Optional[int] = None) -> np.ndarray:
    """Max-min start followed by rate-constrained beam SCA steps with the position fixed.

    A step is kept only when the true rate sum does not drop and every user
    still meets R_min; when the max-min start already misses R_min it is
    returned unchanged, being the best attainable worst-user rate.
    """
    c = FblParams.from_config(cfg).c
    noise = cfg.noise_power
    w = p2init_slot(h, budget, cfg)
    rates = fbl_rate(ch.sinr_all(h, w, noise), c)
    if budget <= 0 or rates.min() < cfg.r_min:
        return w
    for _ in range(cfg.ao_max_iters if iters is None else iters):
        st, w_new, _, _ = p2_slot(h, w, budget, cfg)
        if w_new is None:
            break
        new = fbl_rate(ch.sinr_all(h, w_new, noise), c)
        if new.min() < cfg.r_min or new.sum() < rates.sum() - 1e-9 * max(1.0, abs(rates.sum())):
            break
        gain = new.sum() - rates.sum()
        w, rates = w_new, new
        if gain <= 1e-6 * max(1.0, abs(rates.sum())):
            break
    return w


@dataclass
class FixedPath:
    """Positions and velocities of a flown trajectory, replayed for beam studies."""
    r: np.ndarray  # (T, 3) position at each step
    v: np.ndarray  # (T, 3) velocity applied at each step

    @staticmethod
    def from_trace(trace: MissionTrace) -> "FixedPath":
        return FixedPath(np.array([s.r for s in trace.steps]), np.array([s.v for s in trace.steps]))


def path_channels(cfg: ScenarioConfig, users, path: FixedPath, nlos_key: int) -> np.ndarray:
    pos = _positions(users)
    bank = ch.NlosBank(nlos_key, cfg.num_antennas)
    return np.array([ch.channels_at(cfg, pos, path.r[t], t, bank).h for t in range(len(path.r))])


def fixed_path_rates(kind, cfg: ScenarioConfig, users, path: FixedPath, nlos_key: int) -> np.ndarray:
    """(T, N) FBL rates of one beam scheme along a fixed path."""
    kind = BaselineKind(kind)
    H = path_channels(cfg, users, path, nlos_key)
    c = FblParams.from_config(cfg).c
    out = []
    for t, h in enumerate(H):
        b = slot_budget(cfg, path.v[t])
        if kind is BaselineKind.BF_PROPOSED:
            w = proposed_beams(h, b, cfg)
        else:
            w = beamform_baseline(kind, h, cfg, b)
        out.append(fbl_rate(ch.sinr_all(h, w, cfg.noise_power), c))
    return np.array(out)


def qos_satisfaction(trace_or_rates, r_min: float) -> float:
    """Percentage of steps whose worst-user rate reaches ``r_min``."""
    rates = trace_or_rates.rates() if isinstance(trace_or_rates, MissionTrace) else np.asarray(trace_or_rates)
    if rates.size == 0:
        raise ValueError("no steps to score")
    rates = rates.reshape(rates.shape[0], -1)
    return 100.0 * float(np.mean(rates.min(axis=1) >= r_min))
