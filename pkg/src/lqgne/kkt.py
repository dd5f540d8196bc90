"""Per-agent KKT systems of the finite-horizon and steady-state games.

Dynamic game, agent ``v`` (co-states ``lam``, shared multipliers ``mu``, input multipliers ``eta``)::

    x_{k+1} = A x_k + sum_j B[j] u^j_k,                       x_0 = x0
    lam_k   = l^v_x + C_x' mu_k + A' lam_{k+1}                 k = 0..N-1
    0       = l^v_u + C_u' mu_k + B[v]' lam_{k+1} + G[v]' eta_k
    lam_N   = p^v + C_x' mu_N (+ sigma under a terminal constraint)

Steady-state game: the same with ``x_{k+1} = x_k = x`` and ``lam_{k+1} = lam_k = lam``.

Shared constraint rows that involve only the state are skipped at ``k = 0`` (``x_0`` is
fixed, so they are either satisfied or the problem is infeasible) and, when
``shared_terminal`` is set, imposed on ``x_N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import (DimensionMismatch, LinearPenalty, LqGame, TerminalConstraint, Trajectory)
from .program import AffineGame
from .qp import QpProblem


@dataclass
class DualTrajectory:
    """Multipliers of one agent. ``mu`` has one row per stage 0..N (zero where a row is absent)."""

    lam: np.ndarray     # (N+1, n_x)
    mu: np.ndarray      # (N+1, n_shared)
    eta: np.ndarray     # (N, n_G[v])
    sigma: Optional[np.ndarray] = None


@dataclass
class KktResidual:
    stationarity_x: float
    stationarity_u: float
    boundary: float
    complementarity: float
    primal_feas: float
    dual_feas: float = 0.0

    def max(self) -> float:
        return max(self.stationarity_x, self.stationarity_u, self.boundary,
                   self.complementarity, self.primal_feas, self.dual_feas)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# ------------------------------------------------------------------ layout


@dataclass
class HorizonLayout:
    """Index bookkeeping for the explicit-state vector w = [x_0..x_N, u_0..u_{N-1}]."""

    game: LqGame
    shared_rows: list = field(default_factory=list)   # (k, row) per shared inequality
    agent_rows: list = field(default_factory=list)    # per agent: list of (k, row)
    skipped_violation: float = 0.0

    @property
    def n_X(self):
        return (self.game.N + 1) * self.game.n_x

    @property
    def n_U(self):
        return self.game.N * self.game.n_u_total

    @property
    def n(self):
        return self.n_X + self.n_U

    def x_idx(self, k):
        nx = self.game.n_x
        return np.arange(k * nx, (k + 1) * nx)

    def u_idx(self, k, v=None):
        g = self.game
        base = self.n_X + k * g.n_u_total
        if v is None:
            return np.arange(base, base + g.n_u_total)
        s = g.u_slice(v)
        return np.arange(base + s.start, base + s.stop)

    def pack(self, traj: Trajectory) -> np.ndarray:
        return np.concatenate([traj.x.reshape(-1), traj.u.reshape(-1)])

    def unpack(self, w) -> Trajectory:
        g = self.game
        x = np.array(w[:self.n_X]).reshape(g.N + 1, g.n_x)
        u = np.array(w[self.n_X:]).reshape(g.N, g.n_u_total)
        return Trajectory(x, u)


def _stage_quadratic(game: LqGame, v: int):
    """Hessian blocks and linear terms of l^v in (x, u)."""
    S = np.zeros((game.n_u_total, game.n_u_total))
    sv = game.u_slice(v)
    for j in range(game.M):
        S[sv, game.u_slice(j)] = game.R[v][j]
    Huu = S + S.T
    Hxx = 2.0 * game.Q[v]
    lin = game.linear_term(v)
    qx = -2.0 * game.Q[v] @ game.x_ref + lin[:game.n_x]
    qu = lin[game.n_x:].copy()
    c = float(game.x_ref @ game.Q[v] @ game.x_ref)
    return Hxx, Huu, qx, qu, c


def horizon_program(game: LqGame):
    """The finite-horizon game as an :class:`AffineGame` plus its index layout."""
    g, N, nx = game, game.N, game.n_x
    L = HorizonLayout(game)
    n = L.n
    H, q, c = [], [], []
    for v in range(g.M):
        Hxx, Huu, qx, qu, cv = _stage_quadratic(g, v)
        Hv = np.zeros((n, n))
        qv = np.zeros(n)
        for k in range(N):
            xi, ui = L.x_idx(k), L.u_idx(k)
            Hv[np.ix_(xi, xi)] = Hxx
            Hv[np.ix_(ui, ui)] = Huu
            qv[xi] = qx
            qv[ui] = qu
        qv[L.x_idx(N)] = g.terminal_penalty(v)
        H.append(Hv)
        q.append(qv)
        c.append(N * cv)

    # equalities priced per agent: -x_0 = -x0, A x_k + B u_k - x_{k+1} = 0
    E = np.zeros(((N + 1) * nx, n))
    e = np.zeros((N + 1) * nx)
    E[:nx, L.x_idx(0)] = -np.eye(nx)
    e[:nx] = -g.x0
    Bj = g.B_joint
    for k in range(N):
        r = slice((k + 1) * nx, (k + 2) * nx)
        E[r, L.x_idx(k)] = g.A
        E[r, L.u_idx(k)] = Bj
        E[r, L.x_idx(k + 1)] = -np.eye(nx)

    if isinstance(g.terminal, TerminalConstraint):
        E_com = np.zeros((nx, n))
        E_com[:, L.x_idx(N)] = np.eye(nx)
        e_com = g.terminal.x_target.copy()
    else:
        E_com, e_com = np.zeros((0, n)), np.zeros(0)

    state_rows = set(g.shared_state_rows.tolist())
    Cx, Cu = g.C_shared[:, :nx], g.C_shared[:, nx:]
    F_sh, f_sh = [], []
    skipped = 0.0
    for k in range(N + 1):
        for i in range(g.C_shared.shape[0]):
            d = g.d_shared[i]
            if not np.isfinite(d):
                continue
            if k == 0 and i in state_rows:
                skipped = max(skipped, float(Cx[i] @ g.x0 - d))
                continue
            if k == N and (i not in state_rows or not g.shared_terminal):
                continue
            row = np.zeros(n)
            row[L.x_idx(k)] = Cx[i]
            if k < N:
                row[L.u_idx(k)] = Cu[i]
            F_sh.append(row)
            f_sh.append(d)
            L.shared_rows.append((k, i))
    F_ag, f_ag = [], []
    for v in range(g.M):
        rows, rhs, where = [], [], []
        for k in range(N):
            for i in range(g.G[v].shape[0]):
                if not np.isfinite(g.h[v][i]):
                    continue
                row = np.zeros(n)
                row[L.u_idx(k, v)] = g.G[v][i]
                rows.append(row)
                rhs.append(g.h[v][i])
                where.append((k, i))
        F_ag.append(np.array(rows).reshape(-1, n))
        f_ag.append(np.array(rhs, dtype=float))
        L.agent_rows.append(where)
    L.skipped_violation = max(skipped, 0.0)

    own = [np.concatenate([np.arange(L.n_X),
                           np.concatenate([L.u_idx(k, v) for k in range(N)])])
           for v in range(g.M)]
    prog = AffineGame(n=n, own=own, H=H, q=q, c=c, E_dyn=E, e_dyn=e,
                      F_sh=np.array(F_sh).reshape(-1, n), f_sh=np.array(f_sh, dtype=float),
                      F_ag=F_ag, f_ag=f_ag, E_com=E_com, e_com=e_com)
    return prog, L


def steady_program(game: LqGame) -> AffineGame:
    """The steady-state game over w = [x, u]: dynamics as ``(A - I)x + B u = 0``."""
    g, nx, nu = game, game.n_x, game.n_u_total
    n = nx + nu
    H, q, c = [], [], []
    for v in range(g.M):
        Hxx, Huu, qx, qu, cv = _stage_quadratic(g, v)
        Hv = np.zeros((n, n))
        Hv[:nx, :nx] = Hxx
        Hv[nx:, nx:] = Huu
        H.append(Hv)
        q.append(np.concatenate([qx, qu]))
        c.append(cv)
    E = np.hstack([g.A - np.eye(nx), g.B_joint])
    keep = np.isfinite(g.d_shared)
    F_ag, f_ag = [], []
    for v in range(g.M):
        kv = np.isfinite(g.h[v])
        row = np.zeros((int(kv.sum()), n))
        s = g.u_slice(v)
        row[:, nx + s.start:nx + s.stop] = g.G[v][kv]
        F_ag.append(row)
        f_ag.append(g.h[v][kv])
    own = [np.concatenate([np.arange(nx), nx + np.arange(nu)[g.u_slice(v)]]) for v in range(g.M)]
    return AffineGame(n=n, own=own, H=H, q=q, c=c, E_dyn=E, e_dyn=np.zeros(nx),
                      F_sh=g.C_shared[keep], f_sh=g.d_shared[keep], F_ag=F_ag, f_ag=f_ag)


def duals_from_solution(layout: HorizonLayout, sol) -> list:
    """Split a variational solution into one :class:`DualTrajectory` per agent."""
    g = layout.game
    N, nx = g.N, g.n_x
    n_sh = len(layout.shared_rows)
    mu = np.zeros((N + 1, g.C_shared.shape[0]))
    for j, (k, i) in enumerate(layout.shared_rows):
        mu[k, i] = sol.gamma[j]
    out = []
    offset = n_sh
    for v in range(g.M):
        eta = np.zeros((N, g.G[v].shape[0]))
        for j, (k, i) in enumerate(layout.agent_rows[v]):
            eta[k, i] = sol.gamma[offset + j]
        offset += len(layout.agent_rows[v])
        lam = np.asarray(sol.lam[v]).reshape(N + 1, nx)
        sigma = np.array(sol.sigma) if len(sol.sigma) else None
        out.append(DualTrajectory(lam=lam, mu=mu.copy(), eta=eta, sigma=sigma))
    return out


def assemble_agent_kkt(game: LqGame, v: int, u_others) -> QpProblem:
    """QP over agent ``v``'s (x, u^v) with the other agents' inputs fixed.

    ``u_others`` is a joint input array of shape (N, sum n_u); agent ``v``'s own columns
    are ignored. Variables are ordered [x_0..x_N, u^v_0..u^v_{N-1}].
    """
    u_others = np.asarray(u_others, dtype=float)
    if u_others.shape != (game.N, game.n_u_total):
        raise DimensionMismatch(f"u_others has shape {u_others.shape}, "
                                f"expected {(game.N, game.n_u_total)}")
    prog, L = horizon_program(game)
    w = np.zeros(L.n)
    w[L.n_X:] = u_others.reshape(-1)
    qp, _ = prog.best_response_problem(v, w)
    return qp


# --------------------------------------------------------------- residuals


def _slack_terms(game: LqGame, x, u, mu_row):
    """Violation and complementarity of the shared rows at one stage (u may be None)."""
    nx = game.n_x
    state_rows = set(game.shared_state_rows.tolist())
    viol = comp = 0.0
    for i in range(game.C_shared.shape[0]):
        if u is None and i not in state_rows:
            continue
        if not np.isfinite(game.d_shared[i]):
            continue
        lhs = game.C_shared[i, :nx] @ x
        if u is not None:
            lhs += game.C_shared[i, nx:] @ u
        s = game.d_shared[i] - lhs
        viol = max(viol, -s)
        comp = max(comp, abs(mu_row[i] * s))
    return viol, comp


def kkt_residual(game: LqGame, traj: Trajectory, duals: list) -> KktResidual:
    """Residuals of the per-agent KKT systems, evaluated stage by stage from the raw data."""
    g, N, nx = game, game.N, game.n_x
    x, u = np.asarray(traj.x), np.asarray(traj.u)
    Cx, Cu = g.C_shared[:, :nx], g.C_shared[:, nx:]
    sx = su = bnd = comp = primal = dual = 0.0

    primal = max(primal, float(np.max(np.abs(x[0] - g.x0))))
    for k in range(N):
        pred = g.A @ x[k] + sum(g.B[j] @ u[k, g.u_slice(j)] for j in range(g.M))
        primal = max(primal, float(np.max(np.abs(x[k + 1] - pred))))
    if isinstance(g.terminal, TerminalConstraint):
        primal = max(primal, float(np.max(np.abs(x[N] - g.terminal.x_target))))
    for v in range(g.M):
        d = duals[v]
        lam, mu, eta = np.asarray(d.lam), np.asarray(d.mu), np.asarray(d.eta)
        lin = g.linear_term(v)
        lx, lu_all = lin[:nx], lin[nx:]
        sv = g.u_slice(v)
        for k in range(N):
            lx_k = 2.0 * g.Q[v] @ (x[k] - g.x_ref) + lx
            r = lam[k] - (lx_k + Cx.T @ mu[k] + g.A.T @ lam[k + 1])
            sx = max(sx, float(np.max(np.abs(r))))
            lu = g.R[v][v].T @ u[k, sv] + sum(g.R[v][j] @ u[k, g.u_slice(j)] for j in range(g.M))
            lu = lu + lu_all[sv]
            r = lu + Cu[:, sv].T @ mu[k] + g.B[v].T @ lam[k + 1]
            if g.G[v].shape[0]:
                r = r + g.G[v].T @ eta[k]
            su = max(su, float(np.max(np.abs(r))))
            vi, co = _slack_terms(g, x[k], u[k], mu[k])
            primal = max(primal, vi)
            comp = max(comp, co)
            for i in range(g.G[v].shape[0]):
                if not np.isfinite(g.h[v][i]):
                    continue
                s = g.h[v][i] - g.G[v][i] @ u[k, sv]
                primal = max(primal, -s)
                comp = max(comp, abs(eta[k, i] * s))
        terminal_mu = np.zeros(g.C_shared.shape[0])
        if g.shared_terminal:
            terminal_mu = mu[N]
            vi, co = _slack_terms(g, x[N], None, mu[N])
            primal = max(primal, vi)
            comp = max(comp, co)
        target = g.terminal_penalty(v) + Cx.T @ terminal_mu
        if isinstance(g.terminal, TerminalConstraint):
            target = target + (d.sigma if d.sigma is not None else 0.0)
        bnd = max(bnd, float(np.max(np.abs(lam[N] - target))))
        dual = max(dual, float(max(0.0, -np.min(mu, initial=0.0))),
                   float(max(0.0, -np.min(eta, initial=0.0))))
    return KktResidual(sx, su, bnd, comp, primal, dual)


def steady_state_kkt_residual(game: LqGame, ss) -> KktResidual:
    """Residuals of the steady-state KKT conditions (no boundary conditions)."""
    g, nx = game, game.n_x
    x, u = np.asarray(ss.x_s), np.asarray(ss.u_s)
    Cx, Cu = g.C_shared[:, :nx], g.C_shared[:, nx:]
    sx = su = comp = dual = 0.0
    primal = float(np.max(np.abs(g.A @ x + g.B_joint @ u - x)))
    for v in range(g.M):
        lam, mu, eta = ss.lambda_s[v], ss.mu_s[v], ss.eta_s[v]
        lin = g.linear_term(v)
        sv = g.u_slice(v)
        lx = 2.0 * g.Q[v] @ (x - g.x_ref) + lin[:nx]
        r = lam - (lx + Cx.T @ mu + g.A.T @ lam)
        sx = max(sx, float(np.max(np.abs(r))))
        lu = g.R[v][v].T @ u[sv] + sum(g.R[v][j] @ u[g.u_slice(j)] for j in range(g.M))
        r = lu + lin[nx:][sv] + Cu[:, sv].T @ mu + g.B[v].T @ lam
        if g.G[v].shape[0]:
            r = r + g.G[v].T @ eta
        su = max(su, float(np.max(np.abs(r))))
        for i in range(g.C_shared.shape[0]):
            if not np.isfinite(g.d_shared[i]):
                continue
            s = g.d_shared[i] - g.C_shared[i] @ np.concatenate([x, u])
            primal = max(primal, -s)
            comp = max(comp, abs(mu[i] * s))
        for i in range(g.G[v].shape[0]):
            if not np.isfinite(g.h[v][i]):
                continue
            s = g.h[v][i] - g.G[v][i] @ u[sv]
            primal = max(primal, -s)
            comp = max(comp, abs(eta[i] * s))
        dual = max(dual, float(max(0.0, -np.min(mu, initial=0.0))),
                   float(max(0.0, -np.min(eta, initial=0.0))))
    return KktResidual(sx, su, 0.0, comp, primal, dual)


def constant_duals(game: LqGame, ss, N: int, terminal_sigma: bool = False) -> list:
    """Dual trajectories that stay at the steady-state multipliers for N steps."""
    out = []
    for v in range(game.M):
        lam = np.tile(ss.lambda_s[v], (N + 1, 1))
        mu = np.tile(ss.mu_s[v], (N + 1, 1))
        if not game.shared_terminal:
            mu[N] = 0.0
        else:
            # only state rows exist at stage N
            mask = np.ones(game.C_shared.shape[0], dtype=bool)
            mask[game.shared_state_rows] = False
            mu[N, mask] = 0.0
        eta = np.tile(ss.eta_s[v], (N, 1))
        sigma = None
        if terminal_sigma:
            sigma = (np.asarray(ss.lambda_s[v]) - game.terminal_penalty(v)
                     - game.C_shared[:, :game.n_x].T @ mu[N])
        out.append(DualTrajectory(lam=lam, mu=mu, eta=eta, sigma=sigma))
    return out
