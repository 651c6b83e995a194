"""Window optimization: max-min warm start, beam and trajectory SCA steps, AO loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import channel as ch
from .conic import Affine, ConicProblem, dot, lin_sum
from .fbl import FblParams, fbl_rate
from .propulsion import PropulsionParams, comm_power, propulsion_power, propulsion_surrogate
from .scenario import ScenarioConfig
from .surrogates import bf_point, traj_dispersion, traj_point, traj_shannon

POWER_TOL = 1e-6
KIN_TOL = 1e-6


class InfeasibleInit(RuntimeError):
    """The window initialization violates a constraint family."""

    def __init__(self, family: str, detail: str = ""):
        self.family = family
        super().__init__(f"initialization violates {family}" + (f": {detail}" if detail else ""))


@dataclass
class BeamPlan:
    w: np.ndarray  # (slots, N, M) complex, W^(1/2)

    @property
    def slots(self) -> int:
        return self.w.shape[0]

    def comm_power(self, eta: float) -> np.ndarray:
        return np.sum(np.abs(self.w) ** 2, axis=(1, 2)) / eta


@dataclass
class TrajectoryPlan:
    r: np.ndarray        # (slots + 1, 3); r[0] is the measured start
    v: np.ndarray        # (slots, 3)
    d_tilde: np.ndarray  # (slots, N)

    @property
    def slots(self) -> int:
        return self.v.shape[0]

    @staticmethod
    def from_velocities(r0, v, t_c, users) -> "TrajectoryPlan":
        v = np.array(v, dtype=float)
        r = np.empty((len(v) + 1, 3))
        r[0] = r0
        for k in range(len(v)):
            r[k + 1] = r[k] + v[k] * t_c
        d = np.linalg.norm(np.asarray(users)[None, :, :] - r[:-1, None, :], axis=2)
        return TrajectoryPlan(r, v, d)


@dataclass
class Window:
    """Inputs of one receding-horizon problem."""
    cfg: ScenarioConfig
    users: np.ndarray  # (N, 3)
    bank: ch.NlosBank
    t0: int
    r0: np.ndarray
    v_prev: np.ndarray
    horizon: int

    def channels(self, traj: TrajectoryPlan) -> list:
        return [ch.channels_at(self.cfg, self.users, traj.r[k], self.t0 + k, self.bank)
                for k in range(self.horizon)]


@dataclass
class AoRecord:
    iteration: int
    phi: float
    p2_status: str
    p3_status: str
    accepted: bool
    step: float = 1.0
    note: str = ""


@dataclass
class AoState:
    iteration: int
    beams: BeamPlan
    traj: TrajectoryPlan
    phi_history: list
    records: list = field(default_factory=list)
    stop_reason: str = "iteration-cap"
    snapshot_restored: bool = False

    @property
    def phi(self) -> float:
        return self.phi_history[-1]


# -- objective and constraint evaluation --------------------------------------

def objective_terms(beams: BeamPlan, traj: TrajectoryPlan, cfg: ScenarioConfig, channels) -> tuple:
    """(rate sum, squared-distance sum, propulsion sum) of a window."""
    c = FblParams.from_config(cfg).c
    noise = cfg.noise_power
    pp = PropulsionParams.from_config(cfg)
    rb = np.array(cfg.r_b)
    rate = dist = prop = 0.0
    for k in range(traj.slots):
        gam = ch.sinr_all(channels[k].h, beams.w[k], noise)
        rate += float(np.sum(fbl_rate(gam, c)))
        dist += float(np.sum((traj.r[k + 1] - rb) ** 2))
        prop += propulsion_power(traj.v[k], pp)
    return rate, dist, prop


def objective_eval(beams: BeamPlan, traj: TrajectoryPlan, cfg: ScenarioConfig, channels) -> float:
    """True window objective: weighted rates minus distance and propulsion penalties."""
    psi1, psi2, psi3 = cfg.weights()
    rate, dist, prop = objective_terms(beams, traj, cfg, channels)
    return psi1 * rate - psi2 * dist - psi3 * prop


def slot_rates(cfg, channels_k, w_k) -> np.ndarray:
    gam = ch.sinr_all(channels_k.h, w_k, cfg.noise_power)
    return fbl_rate(gam, FblParams.from_config(cfg).c)


def constraint_violations(win: Window, beams: BeamPlan, traj: TrajectoryPlan, channels=None,
                          rate_check: bool = True) -> list[str]:
    """Independent re-evaluation of C1-C8 (true rates) over the window."""
    cfg = win.cfg
    out = []
    pp = PropulsionParams.from_config(cfg)
    tc = cfg.t_c
    for k in range(traj.slots):
        if np.max(np.abs(traj.r[k + 1] - (traj.r[k] + traj.v[k] * tc))) > 1e-9 * max(1.0, np.abs(traj.r[k]).max()):
            out.append(f"C1 slot {k}")
        rk = traj.r[k + 1]
        if not (cfg.x_range[0] - KIN_TOL <= rk[0] <= cfg.x_range[1] + KIN_TOL
                and cfg.y_range[0] - KIN_TOL <= rk[1] <= cfg.y_range[1] + KIN_TOL
                and cfg.altitude_range[0] - KIN_TOL <= rk[2] <= cfg.altitude_range[1] + KIN_TOL):
            out.append(f"C2 slot {k}")
        v = traj.v[k]
        if math.hypot(v[0], v[1]) > cfg.v_max + KIN_TOL:
            out.append(f"C3 slot {k}")
        if abs(v[2]) > cfg.u_max + KIN_TOL:
            out.append(f"C4 slot {k}")
        prev = win.v_prev if k == 0 else traj.v[k - 1]
        if np.linalg.norm(v - prev) > cfg.a_max * tc + KIN_TOL:
            out.append(f"C5 slot {k}")
        pc = comm_power(beams.w[k], cfg.amp_efficiency)
        if propulsion_power(v, pp) + pc > cfg.p_max + POWER_TOL:
            out.append(f"C6 slot {k}")
        if pc > cfg.p_com_max + POWER_TOL:
            out.append(f"C7 slot {k}")
    if rate_check:
        channels = channels if channels is not None else win.channels(traj)
        for k in range(traj.slots):
            if np.any(slot_rates(cfg, channels[k], beams.w[k]) < cfg.r_min - 1e-9):
                out.append(f"C8 slot {k}")
    return out


# -- budgets and normalization ------------------------------------------------

def slot_budget(cfg: ScenarioConfig, v) -> float:
    """Largest allowed sum of ||w||^2 in a slot given the velocity (C6 and C7)."""
    pp = PropulsionParams.from_config(cfg)
    head = cfg.p_max - propulsion_power(v, pp)
    return max(0.0, min(cfg.p_com_max, head)) * cfg.amp_efficiency


def _scale(cfg) -> float:
    return cfg.amp_efficiency * cfg.p_com_max


def _inner_products(prob: ConicProblem, xr, xi, g: np.ndarray):
    """Affine real/imag parts of g_n^H w_k; returns two (N, N) object arrays."""
    n_users, m = g.shape
    re = np.empty((n_users, n_users), dtype=object)
    im = np.empty((n_users, n_users), dtype=object)
    gr, gi = g.real, g.imag
    for k in range(n_users):
        idx = np.concatenate([xr.indices[k * m:(k + 1) * m], xi.indices[k * m:(k + 1) * m]])
        for n in range(n_users):
            re[n, k] = Affine(idx, np.concatenate([gr[n], gi[n]]))
            im[n, k] = Affine(idx, np.concatenate([-gi[n], gr[n]]))
    return re, im


def _fit_budget(w: np.ndarray, budget: float) -> np.ndarray:
    p = float(np.sum(np.abs(w) ** 2))
    if p > budget and p > 0:
        w = w * math.sqrt(budget / p)
    return w


# -- P2-Init ------------------------------------------------------------------

def _sinr_probe(g: np.ndarray, target: float, tol: float, max_iter: int):
    """Minimum-power beams meeting a common SINR target (normalized units)."""
    n_users, m = g.shape
    prob = ConicProblem()
    xr = prob.add_variables(n_users * m, "wr")
    xi = prob.add_variables(n_users * m, "wi")
    p = prob.add_variables(1, "p")
    re, im = _inner_products(prob, xr, xi, g)
    factor = math.sqrt(1.0 + 1.0 / target)
    for n in range(n_users):
        prob.add_zero(im[n, n])
        rows = [e for k in range(n_users) for e in (re[n, k], im[n, k])] + [1.0]
        prob.add_soc(factor * re[n, n], rows)
    prob.add_soc(p[0], list(xr) + list(xi))
    prob.minimize(p[0])
    res = prob.solve(tol, max_iter)
    if not res.ok:
        return None
    w = res.value(xr).reshape(n_users, m) + 1j * res.value(xi).reshape(n_users, m)
    return w


def _min_sinr(g, w):
    return float(np.min(ch.sinr_all(g, w, 1.0)))


def p2init_slot(h: np.ndarray, budget: float, cfg: ScenarioConfig, rel_tol: float = 1e-4) -> np.ndarray:
    """Max-min SINR beams of one slot by bisection on the common target."""
    n_users, m = h.shape
    if budget <= 0:
        return np.zeros((n_users, m), dtype=complex)
    s0 = _scale(cfg)
    b = budget / s0
    g = h * math.sqrt(s0) / math.sqrt(cfg.noise_power)
    # Feasible starting point: the better of MRT and ZF at full budget.
    best_w, best_val = None, -1.0
    for cand in (_mrt(g, b), _zf(g, b)):
        if cand is not None and _min_sinr(g, cand) > best_val:
            best_w, best_val = cand, _min_sinr(g, cand)
    lo = max(best_val, 0.0)
    hi = float(np.min(np.sum(np.abs(g) ** 2, axis=1))) * b
    tol, it = cfg.solver_tol, cfg.solver_max_iter
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        w = _sinr_probe(g, mid, tol, it)
        if w is not None and np.sum(np.abs(w) ** 2) <= b * (1.0 + 1e-9):
            w = w * math.sqrt(b / max(np.sum(np.abs(w) ** 2), 1e-300))
            got = _min_sinr(g, w)
            if got > best_val:
                best_w, best_val = w, got
            lo = max(mid, min(got, hi))
        else:
            hi = mid
    return best_w * math.sqrt(s0)


def _mrt(g, b):
    n_users = g.shape[0]
    norms = np.linalg.norm(g, axis=1)
    if np.any(norms == 0):
        return None
    return math.sqrt(b / n_users) * g / norms[:, None]


def _zf(g, b):
    n_users, m = g.shape
    if m < n_users:
        return None
    H = np.conj(g)  # rows h_n^H
    try:
        P = np.linalg.pinv(H)  # (M, N), H P = I
    except np.linalg.LinAlgError:
        return None
    if np.linalg.norm(H @ P - np.eye(n_users)) > 1e-6:
        return None
    w = P.T
    norms = np.linalg.norm(w, axis=1)
    return math.sqrt(b / n_users) * w / norms[:, None]


def warm_start_p2init(channels, traj: TrajectoryPlan, cfg: ScenarioConfig) -> BeamPlan:
    """Per-slot max-min SINR beams under the slot power budget."""
    w = np.array([p2init_slot(channels[k].h, slot_budget(cfg, traj.v[k]), cfg)
                  for k in range(traj.slots)])
    return BeamPlan(w)


# -- P2 -------------------------------------------------------------------------

@dataclass
class P2Result:
    status: str
    beams: Optional[BeamPlan]
    surrogate_at_start: float
    surrogate_new: float


def p2_slot(h: np.ndarray, w_lin: np.ndarray, budget: float, cfg: ScenarioConfig):
    """One SCA step of the beam problem in a slot; returns (status, w, surr_start, surr_new)."""
    n_users, m = h.shape
    s0 = _scale(cfg)
    b = budget / s0
    g = h * math.sqrt(s0) / math.sqrt(cfg.noise_power)
    wn = w_lin / math.sqrt(s0)
    c = FblParams.from_config(cfg).c
    pt = bf_point(g, wn, 1.0, c)

    # The concave Shannon bound is written around the incumbent inner product,
    # z_nn = chi_n + delta_n, where it reads
    #   C_i + 2 Re{chi^* delta}/(S_i + I_i) - eta (|delta|^2 + I - I_i);
    # algebraically identical to the textbook form but free of the O(gamma)
    # terms that cancel there.  t_n bounds |delta|^2 + sum_{k!=n} |z_nk|^2.
    prob = ConicProblem()
    xr = prob.add_variables(n_users * m, "wr")
    xi = prob.add_variables(n_users * m, "wi")
    t = prob.add_variables(n_users, "t")
    re, im = _inner_products(prob, xr, xi, g)
    prob.add_soc(math.sqrt(max(b, 0.0)), list(xr) + list(xi))
    total_i = pt.S + pt.I
    rates = []
    for n in range(n_users):
        chi = pt.cross[n, n]
        d_re, d_im = re[n, n] - chi.real, im[n, n] - chi.imag
        others = [e for k in range(n_users) if k != n for e in (re[n, k], im[n, k])]
        prob.add_quad_epigraph(t[n], [d_re, d_im] + others)
        proj = 2.0 * (chi.real * d_re + chi.imag * d_im)  # 2 Re{chi^* delta}
        c_bar = proj * (1.0 / total_i[n]) - pt.eta[n] * (t[n] + 1.0 - pt.I[n]) + math.log1p(pt.gamma[n])
        s_bar = proj + pt.S[n]
        i_terms = []
        for k in range(n_users):
            if k == n:
                continue
            cr = pt.cross[n, k]
            i_terms.append(2.0 * (cr.real * re[n, k] + cr.imag * im[n, k]) - abs(cr) ** 2)
        i_bar = lin_sum(i_terms) + 1.0
        xi_aff = pt.alpha[n] * i_bar + pt.beta[n] * (s_bar + i_bar) + pt.psi[n]
        d_bar = c * pt.B[n] - (c * pt.A[n]) * xi_aff
        r_bar = c_bar - d_bar
        rates.append(r_bar)
        prob.add_le(cfg.r_min, r_bar)
        prob.add_nonneg(s_bar / total_i[n])
        # S + I = S_i + 2 Re{chi^* delta} + t + 1, scaled by the incumbent total
        s_plus_i = (s_bar + t[n] + 1.0) / total_i[n]
        prob.add_le(s_plus_i, 2.0)
        prob.add_le(s_plus_i, (2.0 / pt.I[n]) * i_bar)
    prob.maximize(lin_sum(rates))

    # Surrogate value at the linearization point (t at its tight value).
    interf = pt.I - 1.0
    x0 = np.concatenate([wn.real.ravel(), wn.imag.ravel(), interf])
    start = float(sum(r.value(x0) for r in rates))

    res = prob.solve(cfg.solver_tol, cfg.solver_max_iter)
    if not res.ok:
        return res.status, None, start, math.nan
    w = (res.value(xr).reshape(n_users, m) + 1j * res.value(xi).reshape(n_users, m)) * math.sqrt(s0)
    return "optimal", _fit_budget(w, budget), start, res.objective


def solve_p2(channels, beams: BeamPlan, traj: TrajectoryPlan, cfg: ScenarioConfig) -> P2Result:
    """Beam SCA step for every slot of the window with the trajectory fixed."""
    out = np.empty_like(beams.w)
    start = new = 0.0
    for k in range(traj.slots):
        st, w, s0, s1 = p2_slot(channels[k].h, beams.w[k], slot_budget(cfg, traj.v[k]), cfg)
        if st != "optimal":
            return P2Result(f"{st} (slot {k})", None, math.nan, math.nan)
        out[k] = w
        start += s0
        new += s1
    return P2Result("optimal", BeamPlan(out), start, new)


# -- P3 -------------------------------------------------------------------------

@dataclass
class RateTangent:
    value: float   # R at d_i minus shift
    slope: float   # dR/dd at d_i
    d_i: float
    lo: float      # trust-region lower end for the auxiliary distance


def rate_tangent(A, B, kappa, rho, c, d_i, d_min, d_max, grid: int = 200) -> RateTangent:
    """Affine lower model of the distance-rate curve at d_i.

    Where the tangent is not a global minorant (strong interference makes
    the Shannon term locally concave), the lower end of the distance range
    is raised and any remaining excess is removed by a downward shift.
    """
    pt = traj_point(A, B, kappa, rho, c, min(max(d_i, d_min), d_max), d_min, d_max)
    di = pt.d_i
    r_i = pt.C_i - pt.D_i
    if pt.gamma_i <= 0:
        return RateTangent(r_i, 0.0, di, d_min)
    slope = pt.slope_C - pt.g_D
    below = np.geomspace(d_min, di, grid) if di > d_min else np.array([di])
    above = np.geomspace(di, d_max, grid) if di < d_max else np.array([di])

    def gap(d):
        rate = traj_shannon(A, B, kappa, rho, d) - traj_dispersion(A, B, kappa, rho, d, c)
        return rate - (r_i + slope * (d - di))

    tol = 1e-12 * max(1.0, abs(r_i))
    gb = gap(below)
    bad = np.nonzero(gb < -tol)[0]
    lo = float(below[bad[-1] + 1]) if bad.size else d_min
    pts = np.unique(np.concatenate([below[below >= lo], above]))
    g = gap(pts)
    worst = float(np.min(g))
    # refine every grid-local minimum between its neighbours
    for j in range(len(pts)):
        if (j > 0 and g[j] > g[j - 1]) or (j + 1 < len(pts) and g[j] > g[j + 1]):
            continue
        a, b = pts[max(j - 1, 0)], pts[min(j + 1, len(pts) - 1)]
        if b > a:
            res = minimize_scalar(gap, bounds=(a, b), method="bounded", options={"xatol": 1e-10 * b})
            worst = min(worst, float(res.fun))
    shift = max(0.0, -worst)
    if shift > 0:
        shift += tol  # margin for the refinement's own resolution
    return RateTangent(r_i - shift, slope, di, lo)


@dataclass
class P3Result:
    status: str
    traj: Optional[TrajectoryPlan]
    surrogate: float = math.nan


LEN_SCALE = 100.0


def solve_p3(win: Window, beams: BeamPlan, traj: TrajectoryPlan, channels) -> P3Result:
    """Trajectory SCA step with beams fixed and normalized channels frozen."""
    cfg = win.cfg
    H = win.horizon
    n_users = len(win.users)
    tc = cfg.t_c
    psi1, psi2, psi3 = cfg.weights()
    pp = PropulsionParams.from_config(cfg)
    c = FblParams.from_config(cfg).c
    kappa = cfg.noise_power / cfg.ref_gain
    rho = cfg.pathloss_exponent
    rb = np.array(cfg.r_b)

    prob = ConicProblem()
    v = prob.add_variables(3 * H, "v")
    V = [[v[3 * k + j] for j in range(3)] for k in range(H)]
    # positions r(k), k = 0..H, as affine expressions of the velocities
    R = [[Affine.constant(float(win.r0[j])) for j in range(3)]]
    for k in range(H):
        R.append([R[k][j] + tc * V[k][j] for j in range(3)])

    objective = []
    # distance penalty on post-move positions
    e = prob.add_variables(H, "e")
    for k in range(H):
        prob.add_quad_epigraph(e[k], [(R[k + 1][j] - rb[j]) / LEN_SCALE for j in range(3)])
        objective.append(-psi2 * LEN_SCALE ** 2 * e[k])
        lo = (cfg.x_range[0], cfg.y_range[0], cfg.altitude_range[0])
        hi = (cfg.x_range[1], cfg.y_range[1], cfg.altitude_range[1])
        for j in range(3):
            prob.add_le(lo[j], R[k + 1][j])
            prob.add_le(R[k + 1][j], hi[j])

    # motion limits and propulsion surrogate
    tind = prob.add_variables(H, "tind")
    pz = prob.add_variables(H, "pz")
    u = prob.add_variables(H, "u")
    q = prob.add_variables(H, "q")
    pcom = beams.comm_power(cfg.amp_efficiency)
    for k in range(H):
        prev = [Affine.constant(float(x)) for x in win.v_prev] if k == 0 else V[k - 1]
        prob.add_soc(cfg.a_max * tc, [V[k][j] - prev[j] for j in range(3)])
        prob.add_soc(u[k], V[k][:2])
        prob.add_le(u[k], cfg.v_max)
        prob.add_le(V[k][2], cfg.u_max)
        prob.add_le(-cfg.u_max, V[k][2])
        sur = propulsion_surrogate(traj.v[k][:2], pp)
        s_aff = dot(sur.g, V[k][:2], sur.a - float(sur.g @ sur.v_ref))
        prob.add_le(sur.floor, s_aff)
        prob.add_inv_sqrt_epigraph(tind[k], s_aff)
        prob.add_le(V[k][2], pz[k])
        prob.add_nonneg(pz[k])
        prob.add_cubic_epigraph(q[k], u[k])
        p_ub = pp.induced_coeff * tind[k] + pp.weight * pz[k] + pp.parasite_coeff * q[k]
        prob.add_le(p_ub + pcom[k], cfg.p_max)
        objective.append(-psi3 * p_ub)

    # rate surrogate through auxiliary distances (slot 0 is fixed by r0)
    if H > 1:
        dt = prob.add_variables((H - 1) * n_users, "dtilde")
        for k in range(1, H):
            hhat = channels[k].hhat
            p = np.abs(np.conj(hhat) @ beams.w[k].T) ** 2
            for n in range(n_users):
                A = p[n, n]
                B = p[n].sum() - A
                d_now = float(np.linalg.norm(win.users[n] - traj.r[k]))
                tan = rate_tangent(A, B, kappa, rho, c, d_now, cfg.d_min, cfg.d_max)
                dvar = dt[(k - 1) * n_users + n]
                prob.add_soc(dvar, [float(win.users[n][j]) - R[k][j] for j in range(3)])
                prob.add_le(max(cfg.d_min, tan.lo), dvar)
                prob.add_le(dvar, cfg.d_max)
                r_bar = tan.value + tan.slope * (dvar - tan.d_i)
                prob.add_le(cfg.r_min, r_bar)
                objective.append(psi1 * r_bar)

    prob.maximize(lin_sum(objective))
    res = prob.solve(cfg.solver_tol, cfg.solver_max_iter)
    if not res.ok:
        return P3Result(res.status, None)
    vel = v.value(res.x).reshape(H, 3)
    vel = _project_limits(vel, cfg)
    plan = TrajectoryPlan.from_velocities(win.r0, vel, tc, win.users)
    return P3Result("optimal", plan, res.objective)


def _project_limits(vel: np.ndarray, cfg) -> np.ndarray:
    """Remove solver-tolerance overshoot of the speed limits."""
    vel = vel.copy()
    for k in range(len(vel)):
        sp = math.hypot(vel[k, 0], vel[k, 1])
        if sp > cfg.v_max:
            vel[k, :2] *= cfg.v_max / sp
        vel[k, 2] = min(max(vel[k, 2], -cfg.u_max), cfg.u_max)
    return vel


# -- initialization -----------------------------------------------------------

def _limit_velocity(v, cfg):
    v = np.array(v, dtype=float)
    sp = math.hypot(v[0], v[1])
    scale = 1.0
    if sp > cfg.v_max:
        scale = cfg.v_max / sp
    if abs(v[2]) * scale > cfg.u_max:
        scale = cfg.u_max / abs(v[2])
    return v * scale


def _step_toward(prev, target, cfg):
    dv = target - prev
    nrm = np.linalg.norm(dv)
    lim = cfg.a_max * cfg.t_c
    return prev + (dv * (lim / nrm) if nrm > lim else dv)


def _stopping_speed(dist, dv, tc):
    """Largest speed from which slot-wise braking by ``dv`` halts within ``dist``."""
    def run(s):
        k = math.floor(s / dv)
        return tc * ((k + 1) * s - dv * k * (k + 1) / 2.0)
    lo, hi = 0.0, dist / tc
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if run(mid) <= dist else (lo, mid)
    return lo


def init_trajectory(win: Window) -> TrajectoryPlan:
    """Straight run toward r_B at the largest speed the motion and power limits allow."""
    cfg = win.cfg
    pp = PropulsionParams.from_config(cfg)
    rb = np.array(cfg.r_b)
    r = np.array(win.r0, dtype=float)
    prev = np.array(win.v_prev, dtype=float)
    vel = []
    for _ in range(win.horizon):
        gap = rb - r
        dist = float(np.linalg.norm(gap))
        if dist > 0:
            speed = min(dist / cfg.t_c, _stopping_speed(dist, cfg.a_max * cfg.t_c, cfg.t_c))
            want = _limit_velocity(gap / dist * speed, cfg)
        else:
            want = np.zeros(3)
        cand = _limit_velocity(_step_toward(prev, want, cfg), cfg)
        cand = _power_limited(prev, cand, pp, cfg)
        vel.append(cand)
        r = r + cand * cfg.t_c
        prev = cand
    return TrajectoryPlan.from_velocities(win.r0, np.array(vel), cfg.t_c, win.users)


def _power_limited(prev, cand, pp, cfg):
    """Pull ``cand`` back until propulsion leaves room for transmission.

    The full communication budget is reserved when possible, otherwise a
    tenth or a hundredth of it.  Two repairs are compared: shortening the
    velocity change from ``prev``, and cutting the climb rate (cheapest near
    hover, where slowing down raises the induced power).
    """
    lim = cfg.a_max * cfg.t_c
    for frac in (1.0, 0.1, 0.01):
        cap = cfg.p_max - frac * cfg.p_com_max
        if propulsion_power(cand, pp) <= cap:
            return cand
        options = [v for v in (_shorten(prev, cand, pp, cap), _descend(prev, cand, pp, cap, lim, cfg))
                   if v is not None]
        if options:
            return min(options, key=lambda v: float(np.linalg.norm(v - cand)))
    return prev.copy()


def _shorten(prev, cand, pp, cap):
    if propulsion_power(prev, pp) > cap:
        return None
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if propulsion_power(prev + mid * (cand - prev), pp) <= cap:
            lo = mid
        else:
            hi = mid
    return prev + lo * (cand - prev)


def _descend(prev, cand, pp, cap, lim, cfg):
    v = np.array(cand, dtype=float)
    for _ in range(8):
        level = propulsion_power(np.array([v[0], v[1], 0.0]), pp)
        vz = min(float(cand[2]), (cap - level) / pp.weight)
        if vz < -cfg.u_max or abs(vz - prev[2]) > lim:
            return None
        room = math.sqrt(max(lim * lim - (vz - prev[2]) ** 2, 0.0))
        dh = cand[:2] - prev[:2]
        nh = float(np.linalg.norm(dh))
        h = prev[:2] + (dh * (room / nh) if nh > room else dh)
        v = np.array([h[0], h[1], vz])
        if propulsion_power(v, pp) <= cap:
            return v
    return None


def _blend(win, old: TrajectoryPlan, new: TrajectoryPlan, theta: float) -> TrajectoryPlan:
    vel = old.v + theta * (new.v - old.v)
    return TrajectoryPlan.from_velocities(win.r0, vel, win.cfg.t_c, win.users)


def initialize(win: Window, traj: Optional[TrajectoryPlan] = None):
    traj = traj if traj is not None else init_trajectory(win)
    chans = win.channels(traj)
    beams = warm_start_p2init(chans, traj, win.cfg)
    return beams, traj, chans


def ao_loop(win: Window, init=None, max_iters: Optional[int] = None, alt_velocities=None):
    """Alternate beam and trajectory steps from a feasible start.

    ``alt_velocities`` is a second starting trajectory (for instance the
    previous window's plan shifted by one slot) tried when the straight-run
    start is infeasible.  Returns (BeamPlan, TrajectoryPlan, AoState); raises
    InfeasibleInit when no start satisfies every constraint family.
    """
    cfg = win.cfg
    i_max = cfg.ao_max_iters if max_iters is None else max_iters
    if init is not None:
        beams, traj, chans = init
        bad = constraint_violations(win, beams, traj, chans)
    else:
        beams, traj, chans = initialize(win)
        bad = constraint_violations(win, beams, traj, chans)
        if bad and alt_velocities is not None:
            alt = TrajectoryPlan.from_velocities(win.r0, alt_velocities, cfg.t_c, win.users)
            a_beams, a_traj, a_chans = initialize(win, alt)
            if not constraint_violations(win, a_beams, a_traj, a_chans):
                beams, traj, chans, bad = a_beams, a_traj, a_chans, []
    if bad:
        raise InfeasibleInit(bad[0].split()[0], ", ".join(bad))
    phi = objective_eval(beams, traj, cfg, chans)
    state = AoState(0, beams, traj, [phi])
    slack = 1e-6 * max(1.0, abs(phi))
    for i in range(1, i_max + 1):
        state.iteration = i
        slack = 1e-6 * max(1.0, abs(phi))
        # beam block; a worse true objective keeps the incumbent beams
        p2 = solve_p2(chans, beams, traj, cfg)
        if p2.beams is None:
            state.records.append(AoRecord(i, phi, p2.status, "skipped", False))
            state.stop_reason, state.snapshot_restored = "p2-failure", True
            break
        b_phi = objective_eval(p2.beams, traj, cfg, chans)
        beams_ok = (not constraint_violations(win, p2.beams, traj, chans)
                    and (not cfg.ao_stop_on_decrease or b_phi >= phi - slack))
        if beams_ok:
            beams, phi = p2.beams, b_phi
        # trajectory block, with shorter steps toward the proposal if needed
        p3 = solve_p3(win, beams, traj, chans)
        if p3.traj is None:
            state.records.append(AoRecord(i, phi, p2.status, p3.status, beams_ok))
            state.phi_history.append(phi)
            state.stop_reason, state.snapshot_restored = "p3-failure", True
            break
        accepted = None
        for theta in (1.0, 0.5, 0.25):
            cand = p3.traj if theta == 1.0 else _blend(win, traj, p3.traj, theta)
            c_chans = win.channels(cand)
            if constraint_violations(win, beams, cand, c_chans):
                continue
            c_phi = objective_eval(beams, cand, cfg, c_chans)
            if not cfg.ao_stop_on_decrease or c_phi >= phi - slack:
                accepted = (cand, c_chans, c_phi, theta, beams)
                break
            # beams aimed along the old angles lose gain after the move; refit them
            refit = solve_p2(c_chans, beams, cand, cfg)
            if refit.beams is None or constraint_violations(win, refit.beams, cand, c_chans):
                continue
            r_phi = objective_eval(refit.beams, cand, cfg, c_chans)
            if r_phi >= phi - slack:
                accepted = (cand, c_chans, r_phi, theta, refit.beams)
                break
        if accepted is None:
            state.records.append(AoRecord(i, phi, p2.status, p3.status, beams_ok, 0.0,
                                          note="trajectory step worsened the true objective"))
            state.phi_history.append(phi)
            state.stop_reason, state.snapshot_restored = "objective-decrease", True
            break
        traj, chans, phi, theta, refit_beams = accepted
        notes = [] if beams_ok else ["beam step rejected"]
        if refit_beams is not beams:
            beams = refit_beams
            notes.append("beams refit")
        state.records.append(AoRecord(i, phi, p2.status, p3.status, True, theta, note="; ".join(notes)))
        state.phi_history.append(phi)
    state.beams, state.traj = beams, traj
    return beams, traj, state
