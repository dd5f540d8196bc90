"""Sensitivity of the equilibrium value to the initial state, and co-state identities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import HypothesisViolated, Infeasible, PerturbationInfeasible
from .game import LqGame, agent_cost
from .kkt import horizon_program
from .solver import GnePair, SolverOptions, solve_gne
from .steady import SteadyStateGne

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-9


def game_value(game: LqGame, pair: GnePair) -> float:
    """Sum over agents of their total costs along the pair."""
    return float(sum(agent_cost(game, v, pair.traj) for v in range(game.M)))


def active_constraints(game: LqGame, pair: GnePair, tol: float = ACTIVE_TOL) -> bool:
    """Whether any inequality (including state rows at the initial state) is active."""
    prog, L = horizon_program(game)
    w = L.pack(pair.traj)
    if prog.rhs.size and np.min(prog.rhs - prog.rows @ w) <= tol:
        return True
    nx = game.n_x
    for i in game.shared_state_rows:
        d = game.d_shared[i]
        if np.isfinite(d) and d - game.C_shared[i, :nx] @ game.x0 <= tol:
            return True
    return False


@dataclass
class SensitivityReport:
    v_n: float
    fd_gradient: np.ndarray
    dual_sum: np.ndarray
    rel_error: float
    constraints_active: bool
    h: float
    agent_fd: list = field(default_factory=list)     # per-agent gradients of J^v
    agent_duals: list = field(default_factory=list)  # per-agent lambda^v_0

    def identity_holds(self, tol: float = 1e-4) -> Optional[bool]:
        """None when an inequality is active (the identity is not claimed there)."""
        if self.constraints_active:
            return None
        return self.rel_error <= tol

    def summary(self) -> dict:
        return {"v_n": self.v_n, "fd_gradient": self.fd_gradient.tolist(),
                "dual_sum": self.dual_sum.tolist(), "rel_error": self.rel_error,
                "constraints_active": self.constraints_active, "h": self.h,
                "agent_fd": [g.tolist() for g in self.agent_fd],
                "agent_duals": [l.tolist() for l in self.agent_duals]}


def value_gradient_check(game: LqGame, h: float = 1e-5,
                         opts: Optional[SolverOptions] = None) -> SensitivityReport:
    """Central differences of the game value in x0 against the sum of initial co-states."""
    pair = solve_gne(game, opts)
    v0 = game_value(game, pair)
    dual_sum = np.sum([pair.duals[v].lam[0] for v in range(game.M)], axis=0)
    active = active_constraints(game, pair)
    fd = np.zeros(game.n_x)
    agent_fd = [np.zeros(game.n_x) for _ in range(game.M)]
    for i in range(game.n_x):
        hi = h * max(1.0, abs(game.x0[i]))
        vals = []
        for sgn in (1.0, -1.0):
            x0 = game.x0.copy()
            x0[i] += sgn * hi
            g = game.replace(x0=x0)
            try:
                p = solve_gne(g, opts)
            except Infeasible as exc:
                raise PerturbationInfeasible(f"x0 + {sgn * hi:g} e_{i}: {exc}") from exc
            active = active or active_constraints(g, p)
            vals.append([agent_cost(g, v, p.traj) for v in range(game.M)])
        for v in range(game.M):
            agent_fd[v][i] = (vals[0][v] - vals[1][v]) / (2 * hi)
        fd[i] = sum(agent_fd[v][i] for v in range(game.M))
    rel = float(np.linalg.norm(fd - dual_sum) / max(1.0, np.linalg.norm(dual_sum)))
    if active:
        log.info("an inequality is active; the value-gradient identity is not claimed")
    return SensitivityReport(v0, fd, dual_sum, rel, active, h, agent_fd,
                             [pair.duals[v].lam[0].copy() for v in range(game.M)])


def storage_gradient_check(game: LqGame, ss: SteadyStateGne, storage) -> float:
    """||sum_v lambda_s^v + grad Lambda(x_s)||, defined when no shared row is active."""
    grad = storage.gradient(ss.x_s)
    residual = float(np.linalg.norm(ss.lambda_sum + grad))
    if any(np.any(np.abs(m) > 0) for m in ss.mu_s):
        nx = game.n_x
        Cx = game.C_shared[:, :nx]
        corr = np.linalg.pinv(game.A.T - np.eye(nx)) @ Cx.T
        ext = ss.lambda_sum + sum(corr @ m for m in ss.mu_s) + grad
        raise HypothesisViolated("shared constraints are active at the steady state",
                                 {"residual": residual, "extended_residual": float(np.linalg.norm(ext))})
    return residual


def dual_turnpike_gap(game: LqGame, ss: SteadyStateGne, N: int, x0=None,
                      opts: Optional[SolverOptions] = None) -> list:
    """Per-agent ||lambda^v_0 - lambda_s^v|| for horizon N (x0 defaults to x_s)."""
    x0 = ss.x_s if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    pair = solve_gne(game.replace(N=int(N), x0=x0), opts)
    return [float(np.linalg.norm(pair.duals[v].lam[0] - ss.lambda_s[v])) for v in range(game.M)]


def midpoint_flatness(pair: GnePair) -> list:
    """Per-agent max |lambda^v_k - lambda^v_{N/2}| over the middle third of the horizon."""
    N = pair.traj.u.shape[0]
    lo, hi = N // 3, (2 * N) // 3
    out = []
    for d in pair.duals:
        lam = np.asarray(d.lam)
        out.append(float(np.max(np.abs(lam[lo:hi + 1] - lam[N // 2]))))
    return out
