"""Seeded sampling audits of the convex surrogates and of the dispersion curvature."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channel as ch
from .fbl import FblParams
from .optimizer import p2init_slot, rate_tangent
from .propulsion import PropulsionParams, eval_ub, propulsion_power, propulsion_surrogate
from .scenario import ScenarioConfig, make_streams, place_users
from .surrogates import (audit_bf_surrogate, dispersion_second_derivative_audit, dispersion_tangent_gap,
                         shannon_tangent_gap, traj_dispersion, traj_point, traj_shannon,
                         traj_shannon_lb, traj_dispersion_ub, valid_distance_interval)


@dataclass
class FamilyAudit:
    family: str
    samples: int = 0
    violations: int = 0
    outside_region: int = 0
    worst_excess: float = 0.0      # largest bound-direction error among samples
    tightness_gap: float = 0.0     # largest relative gap at the linearization points

    def absorb(self, excess: np.ndarray, scale: np.ndarray, rel_tol: float = 1e-12):
        excess = np.atleast_1d(excess)
        self.samples += excess.size
        self.violations += int(np.sum(excess > rel_tol * np.maximum(1.0, np.abs(scale))))
        if excess.size:
            self.worst_excess = max(self.worst_excess, float(excess.max()))


@dataclass
class AuditSummary:
    seed: int
    families: dict = field(default_factory=dict)
    concavity_worst: float = -math.inf
    concavity_draws: int = 0

    def to_json(self) -> str:
        doc = {"seed": self.seed, "concavity_worst": self.concavity_worst,
               "concavity_draws": self.concavity_draws,
               "families": {k: asdict(v) for k, v in self.families.items()}}
        return json.dumps(doc, indent=2, sort_keys=True)


@dataclass
class LinearizationDraw:
    r: np.ndarray        # UAV position
    users: np.ndarray
    h: np.ndarray        # (N, M) full channels
    hhat: np.ndarray     # (N, M) normalized channels
    w: np.ndarray        # max-min beams at the full budget
    budget: float


def draw_points(cfg: ScenarioConfig, rng: np.random.Generator, count: int) -> list[LinearizationDraw]:
    """UAV positions along the mission corridor with placed users and max-min beams."""
    out = []
    a, b = np.array(cfg.r_a), np.array(cfg.r_b)
    budget = cfg.amp_efficiency * cfg.p_com_max
    for _ in range(count):
        users = place_users(cfg, rng).positions
        r = a + rng.uniform() * (b - a) + rng.uniform(-20.0, 20.0, 3)
        g = ch.draw_nlos(rng, cfg.num_antennas)
        hs, hh = [], []
        for u in users:
            h, hhat, _, _ = ch.synthesize_channel(cfg, u, r, g)
            hs.append(h)
            hh.append(hhat)
        h_all, hhat_all = np.array(hs), np.array(hh)
        w = p2init_slot(h_all, budget, cfg)
        out.append(LinearizationDraw(r, users, h_all, hhat_all, w, budget))
    return out


def bf_audit(cfg: ScenarioConfig, draws, samples_per_draw: int, rng) -> tuple[FamilyAudit, FamilyAudit]:
    """Beam-side Shannon lower bound and dispersion surrogate over sampled beams."""
    c = FblParams.from_config(cfg).c
    sh, dp = FamilyAudit("bf-shannon"), FamilyAudit("bf-dispersion")
    for dr in draws:
        rep = audit_bf_surrogate(dr.h, dr.w, cfg.noise_power, c, samples_per_draw, rng, dr.budget)
        for fam, inside, viol, worst, gap in (
                (sh, rep.shannon_in_region, rep.shannon_violations, rep.worst_shannon_excess,
                 rep.shannon_gap_at_point),
                (dp, rep.dispersion_in_region, rep.dispersion_violations, rep.worst_dispersion_deficit,
                 rep.dispersion_gap_at_point)):
            fam.samples += inside
            fam.violations += viol
            fam.outside_region += rep.samples * len(dr.w) - inside
            fam.worst_excess = max(fam.worst_excess, worst)
            fam.tightness_gap = max(fam.tightness_gap, gap)
    return sh, dp


def _traj_coeffs(cfg, dr: LinearizationDraw):
    p = np.abs(np.conj(dr.hhat) @ dr.w.T) ** 2
    A = np.diag(p)
    B = p.sum(axis=1) - A
    return A, B


def traj_audit(cfg: ScenarioConfig, draws, distances: int, rng) -> tuple[FamilyAudit, FamilyAudit, FamilyAudit]:
    """Distance tangents (Shannon, dispersion) on their valid interval and the
    combined rate model on its trust region."""
    c = FblParams.from_config(cfg).c
    kappa = cfg.noise_power / cfg.ref_gain
    rho = cfg.pathloss_exponent
    sh, dp, rt = FamilyAudit("traj-shannon"), FamilyAudit("traj-dispersion"), FamilyAudit("traj-rate")
    for dr in draws:
        A, B = _traj_coeffs(cfg, dr)
        for n in range(len(A)):
            d_i = float(np.clip(np.linalg.norm(dr.users[n] - dr.r), cfg.d_min, cfg.d_max))
            pt = traj_point(A[n], B[n], kappa, rho, c, d_i, cfg.d_min, cfg.d_max)
            lo, hi = valid_distance_interval(pt)
            d = rng.uniform(lo, hi, distances)
            C = traj_shannon(A[n], B[n], kappa, rho, d)
            sh.absorb(-shannon_tangent_gap(pt, d), C)
            dp.absorb(-dispersion_tangent_gap(pt, d), np.full_like(d, c))
            sh.tightness_gap = max(sh.tightness_gap, abs(float(traj_shannon_lb(pt, d_i)) - pt.C_i) / pt.C_i)
            dp.tightness_gap = max(dp.tightness_gap, abs(float(traj_dispersion_ub(pt, d_i)) - pt.D_i) / pt.D_i)
            tan = rate_tangent(A[n], B[n], kappa, rho, c, d_i, cfg.d_min, cfg.d_max)
            d2 = rng.uniform(max(cfg.d_min, tan.lo), cfg.d_max, distances)
            R = traj_shannon(A[n], B[n], kappa, rho, d2) - traj_dispersion(A[n], B[n], kappa, rho, d2, c)
            model = tan.value + tan.slope * (d2 - tan.d_i)
            rt.absorb(model - R, R)
            r_i = pt.C_i - pt.D_i
            rt.tightness_gap = max(rt.tightness_gap, abs(tan.value - r_i) / max(abs(r_i), 1e-300))
    return sh, dp, rt


def propulsion_audit(cfg: ScenarioConfig, samples: int, rng) -> FamilyAudit:
    """Upper surrogate of the propulsion power at random references and velocities.

    Draws continue until ``samples`` velocities fall inside the surrogate's
    domain floor; the rest are counted as outside the region.
    """
    pp = PropulsionParams.from_config(cfg)
    fam = FamilyAudit("propulsion")
    while fam.samples < samples:
        ref = _random_velocity(cfg, rng)
        sur = propulsion_surrogate(ref[:2], pp)
        p_ref = propulsion_power(ref, pp)
        fam.tightness_gap = max(fam.tightness_gap, abs(eval_ub(sur, ref) - p_ref) / p_ref)
        v = _random_velocity(cfg, rng)
        if sur.affine(v) < sur.floor:
            fam.outside_region += 1
            continue
        p = propulsion_power(v, pp)
        fam.absorb(np.array([p - eval_ub(sur, v)]), np.array([p]))
    return fam


def _random_velocity(cfg, rng) -> np.ndarray:
    ang = rng.uniform(0.0, 2.0 * math.pi)
    sp = cfg.v_max * math.sqrt(rng.uniform())
    return np.array([sp * math.cos(ang), sp * math.sin(ang), rng.uniform(-cfg.u_max, cfg.u_max)])


def mission_pairs(trace, nlos_key: int) -> list[tuple[float, float]]:
    """(A, B) of every user and step of a flown mission, from its applied beams."""
    cfg = trace.cfg
    bank = ch.NlosBank(nlos_key, cfg.num_antennas)
    out = []
    for s in trace.steps:
        hhat = ch.channels_at(cfg, trace.users, s.r, s.t, bank).hhat
        p = np.abs(np.conj(hhat) @ s.w.T) ** 2
        for n in range(len(p)):
            out.append((float(p[n, n]), float(p[n].sum() - p[n, n])))
    return out


def draw_pairs(cfg: ScenarioConfig, draws) -> list[tuple[float, float]]:
    out = []
    for dr in draws:
        A, B = _traj_coeffs(cfg, dr)
        out += [(float(a), float(b)) for a, b in zip(A, B)]
    return out


def concavity_audit(cfg: ScenarioConfig, pairs) -> tuple[float, int]:
    """Worst central second difference of D(d) over [1, 2000] m across (A, B) pairs."""
    c = FblParams.from_config(cfg).c
    kappa = cfg.noise_power / cfg.ref_gain
    worst, count = -math.inf, 0
    for A, B in pairs:
        if A <= 0:
            continue
        res = dispersion_second_derivative_audit(A, B, kappa, cfg.pathloss_exponent, c=c)
        worst = max(worst, res.worst)
        count += 1
    return worst, count


def run_audits(cfg: ScenarioConfig, seed: int = 0, draws: int = 20, samples_per_draw: int = 500,
               distances: int = 200, mission_seeds=()) -> AuditSummary:
    """Every surrogate family on random corridor draws.

    The curvature audit uses the (A, B) pairs of missions flown with
    ``mission_seeds`` when given, and the random draws otherwise.
    """
    from .mpc import run_mission

    rng = np.random.default_rng([seed, 7])
    pts = draw_points(cfg, rng, draws)
    out = AuditSummary(seed)
    for fam in (*bf_audit(cfg, pts, samples_per_draw, rng), *traj_audit(cfg, pts, distances, rng),
                propulsion_audit(cfg, draws * samples_per_draw, rng)):
        out.families[fam.family] = fam
    if mission_seeds:
        pairs = []
        for s in mission_seeds:
            st = make_streams(int(s))
            users = place_users(cfg, st.users)
            trace = run_mission(cfg.replace(disturbance=0.0), users, st.disturbance, st.nlos_key)
            pairs += mission_pairs(trace, st.nlos_key)
    else:
        pairs = draw_pairs(cfg, pts)
    out.concavity_worst, out.concavity_draws = concavity_audit(cfg, pairs)
    return out
