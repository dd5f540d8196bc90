"""Counting how long equilibrium trajectories stay near the steady state."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SolverError
from .game import LqGame, population_cost
from .solver import SolverOptions, solve_gne

log = logging.getLogger(__name__)

DEFAULT_EPS_GRID = (0.01, 0.02, 0.05, 0.1)


def _traj(obj):
    return obj.traj if hasattr(obj, "traj") else obj


@dataclass
class TurnpikeReport:
    epsilon: float
    q_eps: int
    outside_count: int
    entry_index: Optional[int]
    leaving_index: Optional[int]
    state_deviation: np.ndarray   # ||x_k - x_s||, k = 0..N
    input_deviation: np.ndarray   # ||u_k - u_s||, k = 0..N-1
    N: int = 0
    x0: Optional[np.ndarray] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def summary(self) -> dict:
        return {"N": self.N, "x0": None if self.x0 is None else self.x0.tolist(),
                "epsilon": self.epsilon, "q_eps": self.q_eps,
                "outside_count": self.outside_count, "entry_index": self.entry_index,
                "leaving_index": self.leaving_index, "error": self.error}


def measure_turnpike(traj, ss, eps: float) -> TurnpikeReport:
    """Count stages k = 0..N-1 with ||x_k - x_s|| <= eps and locate the arc near x_s."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    traj = _traj(traj)
    x, u = np.asarray(traj.x), np.asarray(traj.u)
    N = u.shape[0]
    dx = np.linalg.norm(x - ss.x_s, axis=1)
    du = np.linalg.norm(u - ss.u_s, axis=1)
    inside = dx <= eps
    q = int(np.sum(inside[:N]))
    entry = leaving = None
    hits = np.flatnonzero(inside)
    if hits.size:
        entry = int(hits[0])
        exits = np.flatnonzero(~inside[entry:])
        leaving = N if exits.size == 0 else entry + int(exits[0]) - 1
    return TurnpikeReport(eps, q, N - q, entry, leaving, dx, du, N=N, x0=x[0].copy())


def horizon_sweep(game: LqGame, horizons, x0s, eps: float, ss,
                  opts: Optional[SolverOptions] = None) -> list:
    """One report per (N, x0); failures are recorded in the report and the sweep goes on."""
    if any(int(N) < 1 for N in horizons):
        raise ValueError("horizons must be positive")
    out = []
    for N in horizons:
        for x0 in x0s:
            x0 = np.atleast_1d(np.asarray(x0, dtype=float))
            try:
                pair = solve_gne(game.replace(N=int(N), x0=x0), opts)
            except SolverError as exc:
                log.warning("N=%d x0=%s: %s", N, x0.tolist(), exc)
                dev = np.full(int(N) + 1, np.nan)
                out.append(TurnpikeReport(eps, 0, int(N), None, None, dev, dev[:-1],
                                          N=int(N), x0=x0, error=f"{type(exc).__name__}: {exc}"))
                continue
            rep = measure_turnpike(pair, ss, eps)
            rep.x0 = x0
            out.append(rep)
    return out


@dataclass
class LocalMinimizerFit:
    coefficient: float          # largest c with c||dev||^2 <= l - l_s at every checked point
    ok: bool
    n_points: int
    worst: Optional[tuple] = None   # (candidate index, k) attaining the minimum ratio
    details: dict = field(default_factory=dict)


def check_local_minimizer(game: LqGame, ss, rho: float, candidates) -> LocalMinimizerFit:
    """Fit a quadratic lower bound of the stage-cost excess within the rho-ball around (x_s, u_s)."""
    ls = ss.population_cost(game)
    best, worst, count = np.inf, None, 0
    for i, cand in enumerate(candidates):
        traj = _traj(cand)
        for k in range(traj.u.shape[0]):
            d = np.concatenate([traj.x[k] - ss.x_s, traj.u[k] - ss.u_s])
            r2 = float(d @ d)
            if r2 > rho ** 2:
                continue
            count += 1
            excess = population_cost(game, traj.x[k], traj.u[k]) - ls
            if r2 == 0.0:
                if excess < -1e-12:
                    return LocalMinimizerFit(-np.inf, False, count, (i, k))
                continue
            ratio = excess / r2
            if ratio < best:
                best, worst = ratio, (i, k)
    return LocalMinimizerFit(best, bool(best > 0), count, worst)


def estimate_constant(reports, alpha_coeff: float) -> float:
    """Empirical sup of outside_count * alpha(eps) over a sweep, alpha(r) = c r^2."""
    vals = [r.outside_count * alpha_coeff * r.epsilon ** 2 for r in reports if r.ok]
    return max(vals) if vals else float("nan")


def outside_bound(C: float, alpha_coeff: float, eps: float) -> float:
    """Upper bound C / alpha(eps) on the number of stages outside the eps-ball."""
    if alpha_coeff <= 0:
        return np.inf
    return C / (alpha_coeff * eps ** 2)
