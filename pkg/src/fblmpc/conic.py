"""Small conic problem container solved by Clarabel.

Constraints are collected as affine expressions required to lie in a cone
(zero, nonnegative orthant, second-order, 3D power) and compiled into
Clarabel's ``A x + s = b, s in K`` form at solve time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import clarabel
import numpy as np
from scipy import sparse


class Affine:
    """Real affine expression ``sum(val[k] * x[idx[k]]) + const``."""

    __slots__ = ("idx", "val", "const")

    def __init__(self, idx=(), val=(), const=0.0):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.val = np.asarray(val, dtype=float)
        self.const = float(const)

    @staticmethod
    def constant(c: float) -> "Affine":
        return Affine((), (), c)

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine.constant(float(x))

    def __add__(self, other):
        other = Affine.lift(other)
        return Affine(np.concatenate([self.idx, other.idx]),
                      np.concatenate([self.val, other.val]), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.idx, -self.val, -self.const)

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, k):
        if isinstance(k, Affine):
            raise TypeError("Affine expressions only scale by constants")
        k = float(k)
        return Affine(self.idx, self.val * k, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def value(self, x: np.ndarray) -> float:
        return float(np.dot(self.val, x[self.idx]) + self.const) if self.idx.size else self.const

    def __repr__(self):
        terms = " + ".join(f"{v:g}*x{i}" for i, v in zip(self.idx, self.val))
        return f"Affine({terms or '0'} + {self.const:g})"


def lin_sum(terms: Iterable) -> Affine:
    """Sum of affine expressions and constants without repeated copying."""
    idx, val, const = [], [], 0.0
    for t in terms:
        if isinstance(t, Affine):
            idx.append(t.idx)
            val.append(t.val)
            const += t.const
        else:
            const += float(t)
    if not idx:
        return Affine.constant(const)
    return Affine(np.concatenate(idx), np.concatenate(val), const)


def dot(coeffs: Sequence[float], exprs: Sequence[Affine], const: float = 0.0) -> Affine:
    """``const + sum(coeffs[k] * exprs[k])``."""
    out = lin_sum(c * e for c, e in zip(coeffs, exprs) if c != 0.0)
    return out + const


class VarBlock:
    """A contiguous run of scalar variables."""

    def __init__(self, start: int, size: int, name: str):
        self.start, self.size, self.name = start, size, name

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)

    def __len__(self):
        return self.size

    def __getitem__(self, k) -> Affine:
        if isinstance(k, slice):
            return [self[j] for j in range(*k.indices(self.size))]
        if not -self.size <= k < self.size:
            raise IndexError(f"{self.name}[{k}] out of range")
        k = k % self.size
        return Affine([self.start + k], [1.0])

    def __iter__(self):
        return (self[k] for k in range(self.size))

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.array(x[self.start:self.start + self.size])


@dataclass
class _Cone:
    kind: str  # "zero", "nonneg", "soc", "pow"
    rows: list
    alpha: float = 0.0


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "iteration-limit",
    "MaxTime": "iteration-limit",
}


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    iterations: int
    r_prim: float
    r_dual: float
    raw_status: str = ""
    accurate: bool = True

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr) -> float:
        if self.x is None:
            raise ValueError(f"no primal values (status {self.status})")
        if isinstance(expr, VarBlock):
            return expr.value(self.x)
        return Affine.lift(expr).value(self.x)


class ConicProblem:
    """Linear objective over real variables with conic constraints."""

    def __init__(self):
        self.num_vars = 0
        self.cones: list[_Cone] = []
        self._objective = Affine.constant(0.0)
        self._sense = 1.0
        self.blocks: list[VarBlock] = []

    # -- variables and objective -----------------------------------------

    def add_variables(self, size: int, name: str = "x") -> VarBlock:
        if size < 0:
            raise ValueError("negative block size")
        blk = VarBlock(self.num_vars, int(size), name)
        self.num_vars += int(size)
        self.blocks.append(blk)
        return blk

    def minimize(self, expr):
        self._objective, self._sense = Affine.lift(expr), 1.0

    def maximize(self, expr):
        self._objective, self._sense = Affine.lift(expr), -1.0

    # -- constraints ----------------------------------------------------------

    def _check(self, rows):
        for r in rows:
            if r.idx.size and (r.idx.max() >= self.num_vars or r.idx.min() < 0):
                raise ValueError("expression refers to an unknown variable")

    def _add(self, kind, rows, alpha=0.0):
        rows = [Affine.lift(r) for r in rows]
        self._check(rows)
        self.cones.append(_Cone(kind, rows, alpha))

    def add_zero(self, exprs):
        """Each expression equals zero."""
        exprs = list(exprs) if isinstance(exprs, (list, tuple)) else [exprs]
        if exprs:
            self._add("zero", exprs)

    def add_nonneg(self, exprs):
        """Each expression is nonnegative."""
        exprs = list(exprs) if isinstance(exprs, (list, tuple)) else [exprs]
        if exprs:
            self._add("nonneg", exprs)

    def add_le(self, lhs, rhs):
        self.add_nonneg(Affine.lift(rhs) - lhs)

    def add_linear(self, lhs, rhs, sense: str = "<="):
        if sense == "<=":
            self.add_le(lhs, rhs)
        elif sense == ">=":
            self.add_le(rhs, lhs)
        elif sense == "==":
            self.add_zero(Affine.lift(lhs) - rhs)
        else:
            raise ValueError(f"unknown sense {sense!r}")

    def add_soc(self, t, xs: Sequence):
        """``||xs|| <= t``; a single-entry ``xs`` gives ``|x| <= t``."""
        xs = list(xs)
        if not xs:
            self.add_nonneg(t)
            return
        self._add("soc", [t, *xs])

    def add_rsoc(self, u, v, xs: Sequence):
        """``2 u v >= ||xs||^2`` with ``u, v >= 0``."""
        u, v = Affine.lift(u), Affine.lift(v)
        self._add("soc", [u + v, u - v, *[math.sqrt(2.0) * Affine.lift(x) for x in xs]])

    def add_quad_epigraph(self, e, xs: Sequence):
        """``e >= ||xs||^2``."""
        self.add_rsoc(e, 0.5, xs)

    def add_power(self, x, y, z, alpha: float):
        """``x^alpha * y^(1-alpha) >= |z|`` with ``x, y >= 0``."""
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"power-cone exponent must lie in (0, 1), got {alpha}")
        self._add("pow", [x, y, z], alpha)

    def add_inv_sqrt_epigraph(self, t, s):
        """``t^2 s >= 1`` with ``t, s >= 0``, i.e. ``t >= s^(-1/2)``."""
        self.add_power(t, s, 1.0, 2.0 / 3.0)

    def add_cubic_epigraph(self, q, s):
        """``q >= |s|^3``."""
        self.add_power(q, 1.0, s, 1.0 / 3.0)

    # -- compilation ----------------------------------------------------------

    def compile(self):
        """Return (q, A, b, cones, c0) in Clarabel's form, objective minimized."""
        n = self.num_vars
        q = np.zeros(n)
        obj = self._objective * self._sense
        np.add.at(q, obj.idx, obj.val)
        ri, ci, vals, b = [], [], [], []
        cones = []
        row = 0
        for cone in self.cones:
            for expr in cone.rows:
                ri.append(np.full(expr.idx.size, row))
                ci.append(expr.idx)
                vals.append(-expr.val)
                b.append(expr.const)
                row += 1
            m = len(cone.rows)
            if cone.kind == "zero":
                cones.append(clarabel.ZeroConeT(m))
            elif cone.kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(m))
            elif cone.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(m))
            else:
                cones.append(clarabel.PowerConeT(cone.alpha))
        if ri:
            A = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
                                  shape=(row, n))
        else:
            A = sparse.csc_matrix((0, n))
        A.sum_duplicates()
        return q, A, np.asarray(b, dtype=float), cones, obj.const

    def solve(self, tol: float = 1e-8, max_iter: int = 200) -> SolveResult:
        q, A, b, cones, c0 = self.compile()
        n = self.num_vars
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = int(max_iter)
        # Clarabel's stopping rules are scaled differently from a plain KKT
        # residual; a tenfold margin keeps reported values within ``tol``.
        settings.tol_feas = tol / 10.0
        settings.tol_gap_abs = tol / 10.0
        settings.tol_gap_rel = tol / 10.0
        settings.tol_ktratio = 1e-7
        try:
            solver = clarabel.DefaultSolver(sparse.csc_matrix((n, n)), q, A, b, cones, settings)
            sol = solver.solve()
        except Exception as exc:  # the contract is a status, never a crash
            return SolveResult("numerical-failure", None, math.nan, 0, math.inf, math.inf, repr(exc), False)
        raw = str(sol.status)
        status = _STATUS.get(raw, "numerical-failure")
        x = np.array(sol.x) if status == "optimal" else None
        objective = math.nan
        if x is not None:
            objective = self._sense * (float(q @ x) + c0)
        return SolveResult(status, x, objective, int(sol.iterations), float(sol.r_prim),
                           float(sol.r_dual), raw, raw == "Solved")

    def dump(self) -> str:
        """Plain-text standard form: minimize q'x + c0 s.t. b - A x in K."""
        q, A, b, cones, c0 = self.compile()
        lines = [f"vars {self.num_vars}", f"rows {A.shape[0]}", f"c0 {c0!r}",
                 "q " + " ".join(repr(float(v)) for v in q)]
        for cone in self.cones:
            extra = f" {cone.alpha!r}" if cone.kind == "pow" else ""
            lines.append(f"cone {cone.kind} {len(cone.rows)}{extra}")
        coo = A.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"A {i} {j} {v!r}")
        lines.append("b " + " ".join(repr(float(v)) for v in b))
        return "\n".join(lines) + "\n"
