"""Affine games on a shared primal vector and their variational equilibria.

Every agent ``v`` chooses the columns ``own[v]`` of a shared vector ``w`` and minimizes
``1/2 w'H[v]w + q[v]'w + c[v]`` subject to

* ``E_dyn w = e_dyn``: equalities each agent prices with its own multiplier (dynamics),
* ``E_com w = e_com``: equalities priced by a common multiplier (terminal constraint),
* ``F_sh w <= f_sh``: shared inequalities with a common multiplier (variational selection),
* ``F_ag[v] w <= f_ag[v]``: private inequalities of agent ``v``.

Columns owned by every agent (the states) must be determined by ``E_dyn`` given the rest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Infeasible, NoConvergence
from .qp import QpProblem, Tolerances, phase_one, solve_qp

log = logging.getLogger(__name__)


@dataclass
class AffineGame:
    n: int
    own: list
    H: list
    q: list
    c: list
    E_dyn: np.ndarray
    e_dyn: np.ndarray
    F_sh: np.ndarray
    f_sh: np.ndarray
    F_ag: list
    f_ag: list
    E_com: np.ndarray = None
    e_com: np.ndarray = None

    def __post_init__(self):
        if self.E_com is None:
            self.E_com = np.zeros((0, self.n))
            self.e_com = np.zeros(0)
        self.own = [np.asarray(o, dtype=int) for o in self.own]
        common = set(range(self.n))
        for o in self.own:
            common &= set(o.tolist())
        self.shared_cols = np.array(sorted(common), dtype=int)
        self.private_cols = [np.setdiff1d(o, self.shared_cols) for o in self.own]
        self.private_all = np.setdiff1d(np.arange(self.n), self.shared_cols)

    @property
    def M(self) -> int:
        return len(self.own)

    @property
    def rows(self) -> np.ndarray:
        """All inequality rows: shared first, then agent 0, agent 1, ..."""
        return np.vstack([self.F_sh, *self.F_ag])

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f_sh, *self.f_ag])

    def row_owner(self) -> np.ndarray:
        """-1 for shared rows, v for rows private to agent v."""
        return np.concatenate([np.full(len(self.f_sh), -1)]
                              + [np.full(len(f), v) for v, f in enumerate(self.f_ag)])

    def cost(self, v: int, w) -> float:
        return float(0.5 * w @ self.H[v] @ w + self.q[v] @ w + self.c[v])

    def gradient(self, v: int, w) -> np.ndarray:
        return self.H[v] @ w + self.q[v]

    def joint_feasibility(self, tol: Tolerances = Tolerances()):
        E = np.vstack([self.E_dyn, self.E_com])
        e = np.concatenate([self.e_dyn, self.e_com])
        p = QpProblem(np.zeros((self.n, self.n)), np.zeros(self.n), E, e, self.rows, self.rhs)
        return phase_one(p, tol)

    # ------------------------------------------------------------ best responses

    def best_response_problem(self, v: int, w):
        """QP of agent ``v`` over ``w[own[v]]`` with every other column fixed at ``w``."""
        o = self.own[v]
        rest = np.setdiff1d(np.arange(self.n), o)
        wr = w[rest]
        H = self.H[v][np.ix_(o, o)]
        H = 0.5 * (H + H.T)
        q = self.q[v][o] + self.H[v][np.ix_(o, rest)] @ wr
        const = 0.5 * wr @ self.H[v][np.ix_(rest, rest)] @ wr + self.q[v][rest] @ wr + self.c[v]
        E = np.vstack([self.E_dyn, self.E_com])
        e = np.concatenate([self.e_dyn, self.e_com])
        F = np.vstack([self.F_sh, self.F_ag[v]])
        f = np.concatenate([self.f_sh, self.f_ag[v]])
        qp = QpProblem(H, q, E[:, o], e - E[:, rest] @ wr, F[:, o], f - F[:, rest] @ wr)
        return qp, const

    def best_response(self, v: int, w, tol: Tolerances = Tolerances(), warm: bool = True):
        qp, const = self.best_response_problem(v, w)
        z0 = w[self.own[v]] if warm else None
        sol = solve_qp(qp, tol, z0=z0)
        if sol.status.value == "Infeasible":
            raise Infeasible(f"agent {v}: empty feasible set given the other agents' decisions")
        if not sol.ok:
            raise NoConvergence(f"agent {v}: best-response QP status {sol.status.value}")
        w_new = np.array(w, dtype=float)
        w_new[self.own[v]] = sol.z_star
        return w_new, sol, qp.objective(sol.z_star) + const

    def epsilon(self, w, tol: Tolerances = Tolerances()):
        """Largest unilateral improvement over all agents (per-agent list returned too).

        Best responses are cold-started so the certificate does not begin at the candidate.
        """
        gains = []
        for v in range(self.M):
            _, _, best = self.best_response(v, w, tol, warm=False)
            gains.append(self.cost(v, w) - best)
        return max(gains), gains

    # ------------------------------------------------- reduced (input-space) view

    def states_from_inputs(self, u_priv) -> np.ndarray:
        S, P = self.shared_cols, self.private_all
        w = np.zeros(self.n)
        w[P] = u_priv
        w[S] = np.linalg.solve(self.E_dyn[:, S], self.e_dyn - self.E_dyn[:, P] @ u_priv)
        return w

    def pseudo_gradient(self, w) -> np.ndarray:
        """Reduced gradients of every agent w.r.t. its private columns (states eliminated)."""
        S = self.shared_cols
        out = np.zeros(self.n)
        for v in range(self.M):
            g = self.gradient(v, w)
            lam = np.linalg.solve(self.E_dyn[:, S].T, -g[S])
            pv = self.private_cols[v]
            out[pv] = g[pv] + self.E_dyn[:, pv].T @ lam
        return out[self.private_all]


@dataclass
class VariationalSolution:
    w: np.ndarray
    lam: list            # per-agent multipliers of E_dyn
    sigma: np.ndarray    # common multiplier of E_com
    gamma: np.ndarray    # multipliers of all inequality rows (shared, then private)
    active: np.ndarray
    iterations: int = 0
    method: str = ""
    history: list = field(default_factory=list)


def _assemble(g: AffineGame, active: np.ndarray):
    """Linear system for the joint KKT conditions with a fixed active set."""
    n, M = g.n, g.M
    md, mc = g.E_dyn.shape[0], g.E_com.shape[0]
    R, r = g.rows, g.rhs
    owner = g.row_owner()
    A = np.flatnonzero(active)
    na = len(A)
    n_unk = n + M * md + mc + na
    K = np.zeros((n_unk, n_unk))
    rhs = np.zeros(n_unk)
    row = 0
    for v in range(M):
        o = g.own[v]
        no = len(o)
        K[row:row + no, :n] = g.H[v][o, :]
        K[row:row + no, n + v * md:n + (v + 1) * md] = g.E_dyn[:, o].T
        K[row:row + no, n + M * md:n + M * md + mc] = g.E_com[:, o].T
        for j, i in enumerate(A):
            if owner[i] == -1 or owner[i] == v:
                K[row:row + no, n + M * md + mc + j] = R[i, o]
        rhs[row:row + no] = -g.q[v][o]
        row += no
    K[row:row + md, :n] = g.E_dyn
    rhs[row:row + md] = g.e_dyn
    row += md
    K[row:row + mc, :n] = g.E_com
    rhs[row:row + mc] = g.e_com
    row += mc
    K[row:row + na, :n] = R[A]
    rhs[row:row + na] = r[A]
    row += na
    if row != n_unk:
        raise ValueError(f"joint KKT system is not square ({row} equations, {n_unk} unknowns)")
    return K, rhs, A


def _unpack(g: AffineGame, z, A) -> VariationalSolution:
    n, M = g.n, g.M
    md, mc = g.E_dyn.shape[0], g.E_com.shape[0]
    w = z[:n]
    lam = [z[n + v * md:n + (v + 1) * md] for v in range(M)]
    sigma = z[n + M * md:n + M * md + mc]
    gamma = np.zeros(len(g.rhs))
    gamma[A] = z[n + M * md + mc:]
    active = np.zeros(len(g.rhs), dtype=bool)
    active[A] = True
    return VariationalSolution(w, lam, sigma, gamma, active)


def solve_active_set(g: AffineGame, active: np.ndarray) -> VariationalSolution:
    K, rhs, A = _assemble(g, active)
    try:
        z = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        z = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return _unpack(g, z, A)


def kkt_violation(g: AffineGame, sol: VariationalSolution) -> dict:
    """Residuals of the joint (variational) KKT system at ``sol``."""
    R, r = g.rows, g.rhs
    owner = g.row_owner()
    stat = 0.0
    for v in range(g.M):
        o = g.own[v]
        mine = (owner == -1) | (owner == v)
        res = (g.gradient(v, sol.w)[o] + g.E_dyn[:, o].T @ sol.lam[v]
               + g.E_com[:, o].T @ sol.sigma + R[mine][:, o].T @ sol.gamma[mine])
        stat = max(stat, float(np.max(np.abs(res), initial=0.0)))
    slack = r - R @ sol.w
    eq = np.concatenate([g.E_dyn @ sol.w - g.e_dyn, g.E_com @ sol.w - g.e_com])
    return {
        "stationarity": stat,
        "equality": float(np.max(np.abs(eq), initial=0.0)),
        "inequality": float(max(0.0, -np.min(slack, initial=0.0))),
        "complementarity": float(np.max(np.abs(sol.gamma * slack), initial=0.0)),
        "dual_feasibility": float(max(0.0, -np.min(sol.gamma, initial=0.0))),
    }


def _max_violation(d: dict) -> float:
    return max(d.values())


def primal_dual_active_set(g: AffineGame, active0=None, max_iter: int = 100,
                           tol: float = 1e-8):
    """Semismooth Newton on min(gamma, slack) = 0. Returns (solution, converged)."""
    m = len(g.rhs)
    active = np.zeros(m, dtype=bool) if active0 is None else np.array(active0, dtype=bool)
    seen = set()
    R, r = g.rows, g.rhs
    sol = None
    for it in range(1, max_iter + 1):
        sol = solve_active_set(g, active)
        sol.iterations = it
        slack = r - R @ sol.w
        new = sol.gamma - slack > 0
        if np.array_equal(new, active):
            viol = kkt_violation(g, sol)
            return sol, _max_violation(viol) <= tol
        key = new.tobytes()
        if key in seen:
            log.debug("active-set cycle after %d iterations", it)
            return sol, False
        seen.add(active.tobytes())
        active = new
    return sol, False


def fischer_burmeister_newton(g: AffineGame, sol0: Optional[VariationalSolution] = None,
                              max_iter: int = 200, tol: float = 1e-10):
    """Damped semismooth Newton on the Fischer-Burmeister reformulation of the joint KKT."""
    n, M = g.n, g.M
    md, mc = g.E_dyn.shape[0], g.E_com.shape[0]
    R, r = g.rows, g.rhs
    m = len(r)
    owner = g.row_owner()
    # linear part: stationarity + equalities, unknowns (w, lam, sigma, gamma)
    K_all, rhs_all, _ = _assemble(g, np.ones(m, dtype=bool))
    n_lin = K_all.shape[0] - m
    L, l0 = K_all[:n_lin], rhs_all[:n_lin]
    nz = K_all.shape[1]
    if sol0 is None:
        z = np.zeros(nz)
    else:
        z = np.concatenate([sol0.w, *sol0.lam, sol0.sigma, sol0.gamma])

    def phi(z):
        w, gam = z[:n], z[n + M * md + mc:]
        s = r - R @ w
        root = np.sqrt(gam ** 2 + s ** 2)
        return np.concatenate([L @ z - l0, gam + s - root]), gam, s, root

    Phi, gam, s, root = phi(z)
    merit = 0.5 * Phi @ Phi
    for it in range(1, max_iter + 1):
        if np.max(np.abs(Phi)) <= tol:
            break
        J = np.zeros((nz, nz))
        J[:n_lin] = L
        safe = np.where(root > 1e-14, root, 1.0)
        da = np.where(root > 1e-14, 1 - gam / safe, 1 - 1 / np.sqrt(2))
        db = np.where(root > 1e-14, 1 - s / safe, 1 - 1 / np.sqrt(2))
        # d/dw of s = -R
        J[n_lin:, :n] = -db[:, None] * R
        J[n_lin:, n + M * md + mc:] = np.diag(da)
        try:
            d = np.linalg.solve(J, -Phi)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -Phi, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            Pn, gn, sn, rn = phi(z + t * d)
            mn = 0.5 * Pn @ Pn
            if mn <= (1 - 1e-4 * t) * merit:
                break
            t *= 0.5
        z = z + t * d
        Phi, gam, s, root = phi(z)
        merit = 0.5 * Phi @ Phi
    A = np.arange(m)
    out = _unpack(g, z, A)
    out.active = out.gamma > (r - R @ out.w)
    out.iterations = it
    return out, float(np.max(np.abs(Phi), initial=0.0)) <= tol


def solve_variational(g: AffineGame, tol: float = 1e-8, active0=None,
                      check_feasibility: bool = True) -> VariationalSolution:
    """Variational equilibrium of ``g`` (equal multipliers on shared constraints)."""
    if check_feasibility:
        _, viol = g.joint_feasibility()
        if viol > tol:
            raise Infeasible(f"joint feasible set is empty (phase-1 violation {viol:.3g})")
    sol, ok = primal_dual_active_set(g, active0, tol=tol)
    sol.method = "active-set"
    if ok:
        return sol
    log.info("active-set iteration did not settle; switching to Fischer-Burmeister Newton")
    fb, _ = fischer_burmeister_newton(g, sol)
    sol2, ok = primal_dual_active_set(g, fb.active, tol=tol)
    sol2.method = "fischer-burmeister+active-set"
    sol2.iterations += fb.iterations + sol.iterations
    if ok:
        return sol2
    # near-singular systems: the smooth Newton iterate can be accurate where the
    # active-set solve is not
    fb.method = "fischer-burmeister"
    if _max_violation(kkt_violation(g, fb)) <= tol:
        return fb
    best = min((sol, sol2, fb), key=lambda s: _max_violation(kkt_violation(g, s)))
    raise NoConvergence("variational KKT system not solved to tolerance", best=best)
