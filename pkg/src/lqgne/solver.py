"""Open-loop generalized Nash equilibria of the finite-horizon game and their certification.

The default method solves the joint KKT system of the variational equilibrium (common
multipliers on shared constraints) by a primal-dual active-set iteration, with a damped
Fischer-Burmeister Newton method as fallback. A projected pseudo-gradient
(forward-backward) scheme and Gauss-Seidel best-response sweeps are available for
monotone games and diagnostics.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Infeasible, NoConvergence
from .game import LqGame, Trajectory, agent_cost, ensure_valid
from .kkt import (DualTrajectory, KktResidual, duals_from_solution, horizon_program,
                  kkt_residual)
from .program import (AffineGame, VariationalSolution, kkt_violation, primal_dual_active_set,
                      solve_variational)
from .qp import QpProblem, Tolerances, solve_qp

log = logging.getLogger(__name__)

EPS_CLIP = 1e-9
EPS_FLAG = 1e-6


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-8
    method: str = "active-set"       # or "forward-backward", "gauss-seidel"
    max_iter: int = 100_000
    change_tol: float = 1e-10
    certify: bool = True
    qp_tol: Tolerances = field(default_factory=Tolerances)


@dataclass
class GnePair:
    traj: Trajectory
    duals: list
    epsilon: float
    residual: KktResidual
    solver_meta: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.traj.x

    @property
    def u(self):
        return self.traj.u


def _pair_from_solution(game, L, sol: VariationalSolution, meta) -> GnePair:
    traj = L.unpack(sol.w)
    duals = duals_from_solution(L, sol)
    return GnePair(traj, duals, float("nan"), kkt_residual(game, traj, duals), meta)


def solve_gne(game: LqGame, opts: Optional[SolverOptions] = None) -> GnePair:
    """Variational GNE of the finite-horizon game, certified by best-response QPs."""
    opts = opts or SolverOptions()
    ensure_valid(game)
    t0 = time.perf_counter()
    prog, L = horizon_program(game)
    if L.skipped_violation > opts.kkt_tol:
        raise Infeasible(f"initial state violates a state constraint by {L.skipped_violation:.3g}")
    _, viol = prog.joint_feasibility(opts.qp_tol)
    if viol > opts.qp_tol.feas:
        raise Infeasible(f"no trajectory satisfies the constraints from x0={game.x0.tolist()} "
                         f"(phase-1 violation {viol:.3g})")
    if opts.method == "active-set":
        sol = solve_variational(prog, tol=opts.kkt_tol, check_feasibility=False)
    elif opts.method == "forward-backward":
        sol = forward_backward(prog, opts)
    elif opts.method == "gauss-seidel":
        sol = gauss_seidel(prog, opts)
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    meta = {"method": sol.method, "iterations": sol.iterations,
            "wall_time": time.perf_counter() - t0}
    pair = _pair_from_solution(game, L, sol, meta)
    if pair.residual.max() > opts.kkt_tol:
        raise NoConvergence(f"KKT residual {pair.residual.max():.3g} above {opts.kkt_tol:g}",
                            best=pair)
    if opts.certify:
        pair.epsilon = certify_epsilon(game, pair, opts.qp_tol)
    pair.solver_meta["wall_time"] = time.perf_counter() - t0
    return pair


def certify_epsilon(game: LqGame, pair, tol: Tolerances = Tolerances()) -> float:
    """max over agents of J^v(pair) - J^v(best response), from independent QP solves."""
    prog, L = horizon_program(game)
    traj = pair.traj if hasattr(pair, "traj") else pair
    w = L.pack(traj)
    eps, gains = prog.epsilon(w, tol)
    if eps < -EPS_FLAG:
        log.warning("best response is worse than the candidate by %.3g; "
                    "candidate may be infeasible", -eps)
    if hasattr(pair, "solver_meta"):
        pair.solver_meta["agent_gains"] = gains
    return max(eps, 0.0) if eps >= -EPS_CLIP else eps


def best_response(game: LqGame, v: int, u_others, tol: Tolerances = Tolerances()):
    """Agent ``v``'s optimal (x, u^v) and duals with the other inputs fixed.

    Returns ``(x, u_v, duals)`` with ``duals`` a :class:`DualTrajectory`.
    """
    u_others = np.asarray(u_others, dtype=float).reshape(game.N, game.n_u_total)
    prog, L = horizon_program(game)
    w = np.zeros(L.n)
    w[L.n_X:] = u_others.reshape(-1)
    qp, _ = prog.best_response_problem(v, w)
    sol = solve_qp(qp, tol)
    if sol.status.value == "Infeasible":
        raise Infeasible(f"agent {v} has no feasible response")
    if not sol.ok:
        raise NoConvergence(f"agent {v} best-response QP: {sol.status.value}")
    n_X = L.n_X
    x = sol.z_star[:n_X].reshape(game.N + 1, game.n_x)
    uv = sol.z_star[n_X:].reshape(game.N, game.n_u[v])
    # equality multipliers are the co-states by construction of the rows
    lam = sol.lam_eq[:n_X].reshape(game.N + 1, game.n_x)
    sigma = sol.lam_eq[n_X:] if len(sol.lam_eq) > n_X else None
    n_sh = len(L.shared_rows)
    mu = np.zeros((game.N + 1, game.C_shared.shape[0]))
    for j, (k, i) in enumerate(L.shared_rows):
        mu[k, i] = sol.lam_ineq[j]
    eta = np.zeros((game.N, game.G[v].shape[0]))
    for j, (k, i) in enumerate(L.agent_rows[v]):
        eta[k, i] = sol.lam_ineq[n_sh + j]
    return x, uv, DualTrajectory(lam, mu, eta, sigma)


# ---------------------------------------------------------- alternative schemes


def _polish(prog: AffineGame, w, tol) -> VariationalSolution:
    """Finish an approximate equilibrium with the active-set iteration."""
    slack = prog.rhs - prog.rows @ w
    sol, ok = primal_dual_active_set(prog, slack <= 1e-7, tol=tol)
    if not ok:
        raise NoConvergence("polishing from the approximate equilibrium failed", best=sol)
    return sol


def projection(prog: AffineGame, u, tol: Tolerances = Tolerances(), z0=None):
    """Euclidean projection of the input part onto the joint feasible set."""
    n = prog.n
    P = prog.private_all
    H = np.zeros((n, n))
    H[P, P] = 1.0
    q = np.zeros(n)
    q[P] = -u
    E = np.vstack([prog.E_dyn, prog.E_com])
    e = np.concatenate([prog.e_dyn, prog.e_com])
    sol = solve_qp(QpProblem(H, q, E, e, prog.rows, prog.rhs), tol, z0=z0)
    if not sol.ok:
        raise NoConvergence(f"projection QP: {sol.status.value}")
    return sol.z_star


def lipschitz_estimate(prog: AffineGame, iters: int = 100) -> float:
    """Power iteration for the operator norm of the (affine) pseudo-gradient's linear part."""
    P = prog.private_all
    base = prog.pseudo_gradient(prog.states_from_inputs(np.zeros(len(P))))

    def J(d):
        return prog.pseudo_gradient(prog.states_from_inputs(d)) - base

    cols = np.array([J(e) for e in np.eye(len(P))]).T
    v = np.ones(len(P)) / np.sqrt(len(P))
    L = 0.0
    for _ in range(iters):
        y = cols.T @ (cols @ v)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        v = y / nrm
        L = np.sqrt(nrm)
    return float(L)


def forward_backward(prog: AffineGame, opts: SolverOptions) -> VariationalSolution:
    """Projected pseudo-gradient iteration ``u <- P_K(u - F(u)/L)`` with step halving."""
    P = prog.private_all
    L = lipschitz_estimate(prog)
    step = 1.0 / L if L > 0 else 1.0
    w = projection(prog, np.zeros(len(P)), opts.qp_tol)
    prev_res = np.inf
    for it in range(1, opts.max_iter + 1):
        u = w[P]
        F = prog.pseudo_gradient(w)
        w_new = projection(prog, u - step * F, opts.qp_tol, z0=w)
        change = float(np.max(np.abs(w_new[P] - u)))
        res = change / step
        if res > prev_res:
            step *= 0.5
        prev_res = res
        w = w_new
        if change <= opts.change_tol:
            sol = _polish(prog, w, opts.kkt_tol)
            sol.method = "forward-backward"
            sol.iterations = it
            return sol
        if not np.all(np.isfinite(w)):
            break
    raise NoConvergence(f"forward-backward did not converge in {opts.max_iter} iterations "
                        f"(last change {change:.3g})")


def gauss_seidel(prog: AffineGame, opts: SolverOptions, w0=None) -> VariationalSolution:
    """Sequential best-response sweeps until the joint decision stops moving."""
    P = prog.private_all
    w = projection(prog, np.zeros(len(P)), opts.qp_tol) if w0 is None else np.array(w0)
    for it in range(1, opts.max_iter + 1):
        w_old = w.copy()
        for v in range(prog.M):
            w, _, _ = prog.best_response(v, w, opts.qp_tol)
        if np.max(np.abs(w[P] - w_old[P])) <= opts.change_tol:
            sol = _polish(prog, w, opts.kkt_tol)
            sol.method = "gauss-seidel"
            sol.iterations = it
            return sol
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > 1e12:
            break
    raise NoConvergence("best-response sweeps did not converge")


def best_response_sweep(game: LqGame, pair: GnePair, tol: Tolerances = Tolerances()) -> float:
    """One Gauss-Seidel sweep from ``pair``; returns the inf-norm change of the joint input."""
    prog, L = horizon_program(game)
    w = L.pack(pair.traj)
    w0 = w.copy()
    for v in range(prog.M):
        w, _, _ = prog.best_response(v, w, tol)
    return float(np.max(np.abs(w[L.n_X:] - w0[L.n_X:])))


def pair_from_trajectory(game: LqGame, traj: Trajectory, duals=None, certify=True) -> GnePair:
    """Wrap a given trajectory (e.g. a constant one) as a pair, certified from scratch."""
    res = kkt_residual(game, traj, duals) if duals is not None else None
    pair = GnePair(traj, duals, float("nan"), res, {"method": "given"})
    if certify:
        pair.epsilon = certify_epsilon(game, pair)
    return pair


def value(game: LqGame, pair) -> float:
    """Sum over agents of their cumulative costs (terminal penalties included)."""
    return sum(agent_cost(game, v, pair.traj) for v in range(game.M))
