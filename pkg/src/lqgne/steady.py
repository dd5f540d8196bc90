"""Steady-state equilibria and the central (population-optimal) steady state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, NoConvergence
from .game import LqGame, ensure_valid, population_cost, stage_cost
from .kkt import KktResidual, steady_program, steady_state_kkt_residual
from .program import solve_variational
from .qp import QpProblem, Tolerances, solve_qp


@dataclass
class SteadyStateGne:
    x_s: np.ndarray
    u_s: np.ndarray
    lambda_s: list
    mu_s: list
    eta_s: list
    residual: KktResidual

    @property
    def lambda_sum(self) -> np.ndarray:
        return np.sum(self.lambda_s, axis=0)

    def stage_costs(self, game: LqGame) -> list:
        return [stage_cost(game, v, self.x_s, self.u_s) for v in range(game.M)]

    def population_cost(self, game: LqGame) -> float:
        return population_cost(game, self.x_s, self.u_s)


@dataclass
class CentralSteadyState:
    x: np.ndarray
    u: np.ndarray
    cost: float
    multiplier: np.ndarray   # of (A - I)x + B u = 0


def solve_steady_state(game: LqGame, tol: float = 1e-8) -> SteadyStateGne:
    """Variational equilibrium of the one-stage game with (A - I)x + sum_j B^j u^j = 0."""
    ensure_valid(game)
    prog = steady_program(game)
    sol = solve_variational(prog, tol=tol)
    nx = game.n_x
    keep = np.flatnonzero(np.isfinite(game.d_shared))
    mu = np.zeros(game.C_shared.shape[0])
    mu[keep] = sol.gamma[:len(keep)]
    offset = len(keep)
    eta = []
    for v in range(game.M):
        kv = np.flatnonzero(np.isfinite(game.h[v]))
        e = np.zeros(game.G[v].shape[0])
        e[kv] = sol.gamma[offset:offset + len(kv)]
        offset += len(kv)
        eta.append(e)
    ss = SteadyStateGne(x_s=sol.w[:nx].copy(), u_s=sol.w[nx:].copy(),
                        lambda_s=[np.asarray(l).copy() for l in sol.lam],
                        mu_s=[mu.copy() for _ in range(game.M)], eta_s=eta, residual=None)
    ss.residual = steady_state_kkt_residual(game, ss)
    if ss.residual.max() > tol:
        raise NoConvergence(f"steady-state KKT residual {ss.residual.max():.3g}", best=ss)
    return ss


def steady_epsilon(game: LqGame, ss: SteadyStateGne, tol: Tolerances = Tolerances()) -> float:
    """Largest gain any agent gets by moving (x, u^v) alone within the steady-state set."""
    prog = steady_program(game)
    eps, _ = prog.epsilon(np.concatenate([ss.x_s, ss.u_s]), tol)
    return eps


def solve_central_steady_state(game: LqGame, tol: Tolerances = Tolerances()) -> CentralSteadyState:
    """Minimize the population stage cost over the steady-state polytope (one QP)."""
    ensure_valid(game)
    prog = steady_program(game)
    H = sum(prog.H)
    q = sum(prog.q)
    qp = QpProblem(0.5 * (H + H.T), q, prog.E_dyn, prog.e_dyn, prog.rows, prog.rhs)
    sol = solve_qp(qp, tol)
    if sol.status.value == "Infeasible":
        raise Infeasible("steady-state constraint set is empty")
    if not sol.ok:
        raise NoConvergence(f"central steady-state QP: {sol.status.value}")
    nx = game.n_x
    x, u = sol.z_star[:nx].copy(), sol.z_star[nx:].copy()
    return CentralSteadyState(x, u, population_cost(game, x, u), sol.lam_eq.copy())


def efficiency_gap(game: LqGame, ss: SteadyStateGne, central: CentralSteadyState) -> float:
    """Population cost lost at the equilibrium relative to the central optimum."""
    return ss.population_cost(game) - central.cost
