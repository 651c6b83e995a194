"""Successive-convex-approximation bounds for the rate and their audits.

Beamforming side: a concave lower bound of the Shannon term and the affine
dispersion surrogate, both built at a beam linearization point.  Trajectory
side: tangent bounds of the Shannon and dispersion terms as functions of the
UAV-user distance with the normalized channel frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


# -- beamforming side ---------------------------------------------------------

@dataclass(frozen=True)
class BfLinearizationPoint:
    """Per-user constants of one slot, rows index users.

    ``cross[n, k] = h_n^H w_k`` at the linearization beams, so
    ``chi = diag(cross)``.
    """
    cross: np.ndarray
    noise: float
    c: float
    S: np.ndarray
    I: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    psi: np.ndarray

    @property
    def chi(self) -> np.ndarray:
        return np.diag(self.cross)

    @property
    def num_users(self) -> int:
        return self.cross.shape[0]


def sqrt_bound_coeffs(V):
    """Tangent of sqrt at V: sqrt(x) <= B - A*(1 - x) with the returned (A, B).

    A zero dispersion has a vertical tangent; the constant bound 1 (A = 0,
    B = 1) is used there instead.
    """
    V = np.asarray(V, dtype=float)
    A = np.zeros_like(V)
    B = np.ones_like(V)
    pos = V > 0
    root = np.sqrt(V[pos])
    A[pos] = 0.5 / root
    B[pos] = A[pos] + 0.5 * root
    return A, B


def fraction_coeffs(S, I):
    S = np.asarray(S, dtype=float)
    I = np.asarray(I, dtype=float)
    tot = S + I
    return 4.0 * I / tot ** 2, 2.0 * I ** 2 / tot ** 3, I ** 2 / tot ** 2


def bf_point(h_all, w, noise: float, c: float) -> BfLinearizationPoint:
    """Linearization constants at beams ``w`` (rows are users)."""
    h_all = np.asarray(h_all)
    w = np.asarray(w)
    cross = np.conj(h_all) @ w.T
    p = np.abs(cross) ** 2
    S = np.diag(p).copy()
    I = p.sum(axis=1) - S + noise
    gamma = S / I
    eta = S / (I * (S + I))
    inv = 1.0 / (1.0 + gamma)
    V = 1.0 - inv * inv
    A, B = sqrt_bound_coeffs(V)
    alpha, beta, psi = fraction_coeffs(S, I)
    return BfLinearizationPoint(cross, float(noise), float(c), S, I, gamma, eta, V, A, B,
                                alpha, beta, psi)


def _signal_interf(h_all, w, noise):
    cand = np.conj(h_all) @ np.asarray(w).T
    p = np.abs(cand) ** 2
    S = np.diag(p).copy()
    return cand, S, p.sum(axis=1) - S + noise


def linearized_signal(pt: BfLinearizationPoint, cand: np.ndarray) -> np.ndarray:
    """Affine minorant of S_n: 2 Re{chi_n^* h_n^H w_n} - |chi_n|^2."""
    chi = pt.chi
    return 2.0 * np.real(np.conj(chi) * np.diag(cand)) - np.abs(chi) ** 2


def linearized_interference(pt: BfLinearizationPoint, cand: np.ndarray) -> np.ndarray:
    """Affine minorant of I_n built from the cross terms k != n."""
    lin = 2.0 * np.real(np.conj(pt.cross) * cand) - np.abs(pt.cross) ** 2
    np.fill_diagonal(lin, 0.0)
    return lin.sum(axis=1) + pt.noise


def shannon_lb(pt: BfLinearizationPoint, h_all, w) -> np.ndarray:
    """Concave lower bound of ln(1 + gamma_n) for every user."""
    cand, S, I = _signal_interf(h_all, w, pt.noise)
    lin = 2.0 * np.real(np.conj(pt.chi) * np.diag(cand))
    return np.log1p(pt.gamma) + lin / pt.I - pt.gamma - pt.eta * (S + I)


def dispersion_ub(pt: BfLinearizationPoint, h_all, w) -> np.ndarray:
    """Affine dispersion surrogate c*(B - A*Xi) for every user."""
    cand = np.conj(h_all) @ np.asarray(w).T
    s_bar = linearized_signal(pt, cand)
    i_bar = linearized_interference(pt, cand)
    xi = pt.alpha * i_bar + pt.beta * (s_bar + i_bar) + pt.psi
    return pt.c * (pt.B - pt.A * xi)


@dataclass(frozen=True)
class TrustCheck:
    signal: np.ndarray    # linearized signal >= 0
    total: np.ndarray     # S + I <= 2 (S_i + I_i)
    fraction: np.ndarray  # (S + I)/(S_i + I_i) <= 2 I / I_i

    @property
    def shannon_ok(self) -> np.ndarray:
        return self.signal

    @property
    def dispersion_ok(self) -> np.ndarray:
        return self.total & self.fraction

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.signal & self.total & self.fraction))


def trust_regions(pt: BfLinearizationPoint, h_all, w, slack: float = 0.0) -> TrustCheck:
    cand, S, I = _signal_interf(h_all, w, pt.noise)
    s_lin = linearized_signal(pt, cand)
    tot_i = pt.S + pt.I
    return TrustCheck(
        signal=s_lin >= -slack * np.maximum(np.abs(pt.chi) ** 2, 1e-300),
        total=S + I <= 2.0 * tot_i * (1.0 + slack),
        fraction=(S + I) / tot_i <= 2.0 * I / pt.I * (1.0 + slack),
    )


def true_rate_parts(h_all, w, noise, c):
    """(C, D) per user from the exact SINR."""
    _, S, I = _signal_interf(h_all, w, noise)
    gamma = S / I
    return np.log1p(gamma), dispersion_from_gamma(gamma, c)


def dispersion_from_gamma(gamma, c):
    """c*sqrt(1 - (1+gamma)^-2) evaluated without cancellation."""
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = c * np.sqrt(gamma * (gamma + 2.0)) / (1.0 + gamma)
    return np.where(np.isinf(gamma), c, out)


@dataclass
class BfAuditReport:
    samples: int
    shannon_violations: int = 0
    dispersion_violations: int = 0
    trust_region_failures: int = 0
    shannon_in_region: int = 0
    dispersion_in_region: int = 0
    shannon_gap_at_point: float = 0.0
    dispersion_gap_at_point: float = 0.0
    worst_shannon_excess: float = 0.0
    worst_dispersion_deficit: float = 0.0
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in asdict(self).items()) + "\n"


def audit_bf_surrogate(h_all, w_lin, noise, c, samples: int, rng: np.random.Generator,
                       budget: float, spread: float = 0.3) -> BfAuditReport:
    """Sample beams around ``w_lin`` inside the power budget and count bound failures.

    Samples outside any trust region are counted as trust-region failures and
    excluded from the violation counts of the bound they would void.
    """
    h_all = np.asarray(h_all)
    w_lin = np.asarray(w_lin)
    pt = bf_point(h_all, w_lin, noise, c)
    C_true, D_true = true_rate_parts(h_all, w_lin, noise, c)
    rep = BfAuditReport(samples=samples)
    rep.shannon_gap_at_point = float(np.max(np.abs(shannon_lb(pt, h_all, w_lin) - C_true)
                                            / np.maximum(np.abs(C_true), 1e-300)))
    rep.dispersion_gap_at_point = float(np.max(np.abs(dispersion_ub(pt, h_all, w_lin) - D_true)
                                               / np.maximum(np.abs(D_true), 1e-300)))
    scale = math.sqrt(max(float(np.sum(np.abs(w_lin) ** 2)), 1e-300))
    shape = w_lin.shape
    for _ in range(samples):
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z *= spread * rng.uniform() * scale / max(np.linalg.norm(z), 1e-300)
        w = w_lin + z
        pw = float(np.sum(np.abs(w) ** 2))
        if pw > budget:
            w *= math.sqrt(budget / pw)
        tr = trust_regions(pt, h_all, w)
        if not tr.all_ok:
            rep.trust_region_failures += 1
        C, D = true_rate_parts(h_all, w, noise, c)
        lb = shannon_lb(pt, h_all, w)
        ub = dispersion_ub(pt, h_all, w)
        ok_s = tr.shannon_ok
        rep.shannon_in_region += int(ok_s.sum())
        excess = (lb - C)[ok_s]
        tol_s = 1e-12 * np.maximum(1.0, np.abs(C[ok_s]))
        if np.any(excess > tol_s):
            rep.shannon_violations += 1
        if excess.size:
            rep.worst_shannon_excess = max(rep.worst_shannon_excess, float(excess.max()))
        ok_d = tr.dispersion_ok
        rep.dispersion_in_region += int(ok_d.sum())
        deficit = (D - ub)[ok_d]
        if np.any(deficit > 1e-12 * np.maximum(1.0, D[ok_d])):
            rep.dispersion_violations += 1
        if deficit.size:
            rep.worst_dispersion_deficit = max(rep.worst_dispersion_deficit, float(deficit.max()))
    return rep


# -- trajectory side ----------------------------------------------------------

def _x(kappa, rho, d):
    return kappa * np.asarray(d, dtype=float) ** rho


def traj_gamma(A, B, kappa, rho, d):
    return A / (B + _x(kappa, rho, d))


def traj_shannon(A, B, kappa, rho, d):
    """ln(1 + A/(B + kappa d^rho)) = ln(A + B + x) - ln(B + x)."""
    x = _x(kappa, rho, d)
    return np.log1p(A / (B + x))


def dispersion_excess(A, B, kappa, rho, d, c):
    """D(d) - c, which is -c (1+gamma)^-2 / (1 + sqrt(V)); exact to rounding."""
    x = _x(kappa, rho, d)
    inv = (B + x) / (A + B + x)  # (1 + gamma)^-1
    sqrt_v = np.sqrt(np.maximum(1.0 - inv * inv, 0.0))
    return -c * inv * inv / (1.0 + sqrt_v)


def traj_dispersion(A, B, kappa, rho, d, c):
    return c + dispersion_excess(A, B, kappa, rho, d, c)


@dataclass(frozen=True)
class TrajLinearizationPoint:
    A: float
    B: float
    kappa: float
    rho: float
    c: float
    d_i: float
    d_min: float
    d_max: float

    def __post_init__(self):
        if not self.d_min - 1e-9 <= self.d_i <= self.d_max + 1e-9:
            raise ValueError(f"linearization distance {self.d_i} outside [{self.d_min}, {self.d_max}]")
        if self.A < 0 or self.B < 0:
            raise ValueError("A and B must be nonnegative")

    @property
    def x_i(self) -> float:
        return self.kappa * self.d_i ** self.rho

    @property
    def gamma_i(self) -> float:
        return self.A / (self.B + self.x_i)

    @property
    def C_i(self) -> float:
        return math.log1p(self.gamma_i)

    @property
    def D_i(self) -> float:
        return float(traj_dispersion(self.A, self.B, self.kappa, self.rho, self.d_i, self.c))

    @property
    def dgamma(self) -> float:
        """d gamma / d d at d_i."""
        den = self.B + self.x_i
        return -self.A * self.kappa * self.rho * self.d_i ** (self.rho - 1.0) / den ** 2

    @property
    def slope_C(self) -> float:
        return self.dgamma / (1.0 + self.gamma_i)

    @property
    def g_D(self) -> float:
        g = self.gamma_i
        if g <= 0:
            raise ValueError("dispersion slope undefined at zero SINR")
        v = 1.0 - (1.0 + g) ** -2
        return self.c * (1.0 + g) ** -3 / math.sqrt(v) * self.dgamma

    def _check(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < self.d_min - 1e-9) or np.any(d > self.d_max + 1e-9):
            raise ValueError(f"candidate distance outside [{self.d_min}, {self.d_max}]")
        return d


def traj_point(A, B, kappa, rho, c, d_i, d_min, d_max) -> TrajLinearizationPoint:
    return TrajLinearizationPoint(float(A), float(B), float(kappa), float(rho), float(c),
                                  float(d_i), float(d_min), float(d_max))


def traj_shannon_lb(pt: TrajLinearizationPoint, d):
    d = pt._check(d)
    return pt.C_i + pt.slope_C * (d - pt.d_i)


def traj_dispersion_ub(pt: TrajLinearizationPoint, d):
    d = pt._check(d)
    return pt.D_i + pt.g_D * (d - pt.d_i)


def shannon_tangent_gap(pt: TrajLinearizationPoint, d):
    """C(d) minus its tangent; nonnegative where the lower bound holds."""
    d = np.asarray(d, dtype=float)
    return traj_shannon(pt.A, pt.B, pt.kappa, pt.rho, d) - (pt.C_i + pt.slope_C * (d - pt.d_i))


def dispersion_tangent_gap(pt: TrajLinearizationPoint, d):
    """Tangent of D minus D; nonnegative where the upper bound holds."""
    d = np.asarray(d, dtype=float)
    f = dispersion_excess(pt.A, pt.B, pt.kappa, pt.rho, d, pt.c)
    f_i = dispersion_excess(pt.A, pt.B, pt.kappa, pt.rho, pt.d_i, pt.c)
    return (f_i - f) + pt.g_D * (d - pt.d_i)


def valid_distance_interval(pt: TrajLinearizationPoint, grid: int = 400) -> tuple[float, float]:
    """Largest interval around d_i on which both tangent bounds hold.

    Scanned on a geometric grid and refined by bisection at each end; used as
    a trust region on the auxiliary distance.
    """
    lo_d, hi_d = pt.d_min, pt.d_max

    def ok(d):
        if abs(d - pt.d_i) <= 1e-9 * pt.d_i:
            return True
        tol = 1e-12
        sg = shannon_tangent_gap(pt, d)
        dg = dispersion_tangent_gap(pt, d) if pt.gamma_i > 0 else 0.0
        return sg >= -tol * max(1.0, pt.C_i) and dg >= -tol * pt.c

    def edge(a, b):
        # a is valid, b is not; shrink toward the boundary
        for _ in range(60):
            m = 0.5 * (a + b)
            if ok(m):
                a = m
            else:
                b = m
        return a

    below = np.geomspace(pt.d_i, lo_d, grid) if pt.d_i > lo_d else np.array([pt.d_i])
    lo = pt.d_i
    for d in below[1:]:
        if ok(d):
            lo = d
        else:
            lo = edge(lo, d)
            break
    above = np.geomspace(pt.d_i, hi_d, grid) if pt.d_i < hi_d else np.array([pt.d_i])
    hi = pt.d_i
    for d in above[1:]:
        if ok(d):
            hi = d
        else:
            hi = edge(hi, d)
            break
    return float(lo), float(hi)


@dataclass
class ConcavityAudit:
    worst: float          # max central second difference of D
    at: float             # distance where it occurs
    spacing: float
    interval: tuple

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def dispersion_second_derivative_audit(A, B, kappa, rho, interval=(1.0, 2000.0),
                                       spacing: float = 1.0, c: float = 1.0) -> ConcavityAudit:
    """Largest central second difference of D over a uniform grid.

    Differences are taken on D - c, which carries the full variation without
    the cancellation of subtracting values close to c.
    """
    lo, hi = interval
    n = int(round((hi - lo) / spacing))
    d = lo + spacing * np.arange(n + 1)
    f = dispersion_excess(A, B, kappa, rho, d, c)
    second = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / spacing ** 2
    k = int(np.argmax(second))
    return ConcavityAudit(float(second[k]), float(d[k + 1]), float(spacing), (float(lo), float(hi)))
