"""Dense convex QP solver.

    minimize   1/2 z'Hz + q'z
    subject to E z = e,  F z <= f

Primal active-set method on the full KKT system. A feasible start comes from the
caller or from an elastic phase-1 LP. Ties (blocking constraints, most negative
multiplier) are always broken towards the lowest row index, so identical inputs
give bit-identical outputs.

Multiplier signs follow the Lagrangian ``1/2 z'Hz + q'z + lam_eq'(Ez - e) + lam_ineq'(Fz - f)``,
i.e. stationarity reads ``Hz + q + E'lam_eq + F'lam_ineq = 0`` with ``lam_ineq >= 0``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    kkt: float = 1e-8
    feas: float = 1e-8
    comp: float = 1e-8


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"


class QpProblem:
    def __init__(self, H, q, E=None, e=None, F=None, f=None):
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        n = self.H.shape[0]
        self.q = np.asarray(q, dtype=float).reshape(-1)
        self.E = np.zeros((0, n)) if E is None else np.asarray(E, dtype=float).reshape(-1, n)
        self.e = np.zeros(0) if e is None else np.asarray(e, dtype=float).reshape(-1)
        self.F = np.zeros((0, n)) if F is None else np.asarray(F, dtype=float).reshape(-1, n)
        self.f = np.zeros(0) if f is None else np.asarray(f, dtype=float).reshape(-1)
        if self.H.shape != (n, n) or self.q.shape != (n,):
            raise ValueError(f"H {self.H.shape} and q {self.q.shape} inconsistent")
        if self.E.shape[0] != self.e.shape[0] or self.F.shape[0] != self.f.shape[0]:
            raise ValueError("constraint matrix / right-hand side size mismatch")
        if n and np.max(np.abs(self.H - self.H.T)) > 1e-12:
            raise ValueError("H must be symmetric")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.q @ z)

    def scaled(self, c: float) -> "QpProblem":
        return QpProblem(c * self.H, c * self.q, self.E, self.e, self.F, self.f)


@dataclass
class QpSolution:
    z_star: np.ndarray
    lam_eq: np.ndarray
    lam_ineq: np.ndarray
    status: QpStatus
    iterations: int = 0
    phase1_violation: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def residuals(p: QpProblem, sol: QpSolution) -> dict:
    z = sol.z_star
    stat = p.H @ z + p.q + p.E.T @ sol.lam_eq + p.F.T @ sol.lam_ineq
    slack = p.f - p.F @ z
    out = {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "equality": float(np.max(np.abs(p.E @ z - p.e), initial=0.0)),
        "inequality": float(max(0.0, -np.min(slack, initial=0.0))),
        "complementarity": float(np.max(np.abs(sol.lam_ineq * slack), initial=0.0)),
        "dual_feasibility": float(max(0.0, -np.min(sol.lam_ineq, initial=0.0))),
    }
    return out


def duality_gap(p: QpProblem, sol: QpSolution) -> float:
    """Primal objective minus the Wolfe dual objective at ``(z, lam)``."""
    z = sol.z_star
    primal = p.objective(z)
    dual = (-0.5 * z @ p.H @ z - p.e @ sol.lam_eq - p.f @ sol.lam_ineq
            + (p.H @ z + p.q + p.E.T @ sol.lam_eq + p.F.T @ sol.lam_ineq) @ z)
    return float(primal - dual)


def phase_one(p: QpProblem, tol: Tolerances = Tolerances()):
    """Elastic LP: minimize total violation. Returns (z, violation)."""
    n, me, mi = p.n, p.E.shape[0], p.F.shape[0]
    if mi == 0:
        z = np.linalg.lstsq(p.E, p.e, rcond=None)[0] if me else np.zeros(n)
        return z, float(np.sum(np.abs(p.E @ z - p.e)))
    # variables: z (free), t >= 0 (ineq), s+ >= 0, s- >= 0 (eq)
    c = np.concatenate([np.zeros(n), np.ones(mi), np.ones(2 * me)])
    A_ub = np.hstack([p.F, -np.eye(mi), np.zeros((mi, 2 * me))])
    A_eq = np.hstack([p.E, np.zeros((me, mi)), -np.eye(me), np.eye(me)]) if me else None
    bounds = [(None, None)] * n + [(0, None)] * (mi + 2 * me)
    res = linprog(c, A_ub=A_ub, b_ub=p.f, A_eq=A_eq, b_eq=p.e if me else None,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return res.x[:n], float(res.fun)


def _independent(rows: np.ndarray, a: np.ndarray) -> bool:
    if rows.shape[0] == 0:
        return np.linalg.norm(a) > 0
    coef = np.linalg.lstsq(rows.T, a, rcond=None)[0]
    return np.linalg.norm(rows.T @ coef - a) > 1e-9 * max(1.0, np.linalg.norm(a))


def _kkt_solve(H, Aw, g, b):
    """Solve [H Aw'; Aw 0][p; nu] = [-g; b]. Returns (p, nu, singular)."""
    n, m = H.shape[0], Aw.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-g, b])
    try:
        sol = np.linalg.solve(K, rhs)
        if np.all(np.isfinite(sol)):
            return sol[:n], sol[n:], False
    except np.linalg.LinAlgError:
        pass
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:], True


def solve_qp(p: QpProblem, tol: Tolerances = Tolerances(), z0=None,
             max_iter: Optional[int] = None) -> QpSolution:
    n, me, mi = p.n, p.E.shape[0], p.F.shape[0]
    max_iter = max_iter or 50 * (n + mi + 10)

    z = None
    if z0 is not None:
        z0 = np.asarray(z0, dtype=float)
        eq_ok = me == 0 or np.max(np.abs(p.E @ z0 - p.e)) <= tol.feas
        in_ok = mi == 0 or np.max(p.F @ z0 - p.f) <= tol.feas
        if eq_ok and in_ok:
            z = z0.copy()
    viol = 0.0
    if z is None:
        z, viol = phase_one(p, tol)
        if viol > tol.feas:
            return QpSolution(z, np.zeros(me), np.zeros(mi), QpStatus.INFEASIBLE, 0, viol)

    # initial working set: active rows, lowest index first, kept linearly independent
    W: list[int] = []
    rows = p.E.copy()
    slack = p.f - p.F @ z
    for i in np.flatnonzero(slack <= tol.feas):
        if _independent(rows, p.F[i]):
            W.append(int(i))
            rows = np.vstack([rows, p.F[i]])
    if rows.shape[0]:
        # land exactly on the working set
        b = np.concatenate([p.e, p.f[W]])
        z = z - np.linalg.lstsq(rows, rows @ z - b, rcond=None)[0]

    status = QpStatus.MAX_ITER
    it = 0
    nu = np.zeros(me + len(W))
    at_minimizer = False   # set after an unblocked full step: remaining step is round-off
    for it in range(1, max_iter + 1):
        Aw = np.vstack([p.E, p.F[W]]) if W else p.E
        g = p.H @ z + p.q
        step, nu, singular = _kkt_solve(p.H, Aw, g, np.zeros(Aw.shape[0]))
        if singular:
            # zero-curvature direction inside the working set
            _, s, Vt = np.linalg.svd(np.vstack([p.H, Aw]))
            null = Vt[np.sum(s > 1e-10 * max(1.0, s[0])):]
            slopes = null @ g
            if null.shape[0] and np.max(np.abs(slopes)) > tol.kkt:
                j = int(np.argmax(np.abs(slopes)))
                step = -np.sign(slopes[j]) * null[j]
                Fp = p.F @ step
                cand = [i for i in range(mi) if i not in W and Fp[i] > 1e-12]
                if not cand:
                    status = QpStatus.UNBOUNDED
                    break
                ratios = np.array([max(p.f[i] - p.F[i] @ z, 0.0) / Fp[i] for i in cand])
                k = int(np.argmin(ratios))
                z = z + ratios[k] * step
                W = sorted(W + [cand[k]])
                continue
        if at_minimizer or np.max(np.abs(step), initial=0.0) <= 1e-12 * (1.0 + np.max(np.abs(z), initial=0.0)):
            at_minimizer = False
            lam_w = nu[me:]
            if lam_w.size == 0 or np.min(lam_w) >= -tol.kkt:
                status = QpStatus.OPTIMAL
                break
            drop = int(np.argmin(lam_w))
            del W[drop]
            continue
        Fp = p.F @ step
        alpha, block = 1.0, None
        for i in range(mi):
            if i in W or Fp[i] <= 1e-14:
                continue
            r = max(p.f[i] - p.F[i] @ z, 0.0) / Fp[i]
            if r < alpha:
                alpha, block = r, i
        z = z + alpha * step
        if block is not None:
            W = sorted(W + [block])
        else:
            at_minimizer = True

    lam_eq = np.zeros(me)
    lam_ineq = np.zeros(mi)
    if status is QpStatus.OPTIMAL:
        # polish: solve the equality-constrained problem on the final working set exactly
        Aw = np.vstack([p.E, p.F[W]]) if W else p.E
        b = np.concatenate([p.e, p.f[W]])
        zz, nu2, singular = _kkt_solve(p.H, Aw, p.q, b)
        if not singular and np.all(p.F @ zz - p.f <= tol.feas) and np.min(nu2[me:], initial=0) >= -tol.kkt:
            z, nu = zz, nu2
        lam_eq = nu[:me].copy()
        lam_ineq[W] = np.maximum(nu[me:], 0.0)
    return QpSolution(z, lam_eq, lam_ineq, status, it, viol)
