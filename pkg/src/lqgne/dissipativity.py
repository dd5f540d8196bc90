"""Dissipation inequalities along equilibrium trajectories.

Supply rate ``s(x, u) = l(x, u) - l(x_s, u_s)`` with ``l`` the population stage cost. A storage
``Lambda`` satisfies the strict inequality at a point if

    Lambda(A x + B u) - Lambda(x) <= s(x, u) - c ||(x - x_s, u - u_s)||^2.

Only points of certified equilibrium pairs are checked.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SolverError
from .game import LqGame, population_cost, population_trajectory_cost
from .solver import SolverOptions, solve_gne
from .steady import SteadyStateGne

log = logging.getLogger(__name__)

STRICT = "StrictlyDissipative"
WEAK = "DissipativeOnly"
VIOLATED = "Violated"


def _traj(obj):
    return obj.traj if hasattr(obj, "traj") else obj


@dataclass
class StorageCandidate:
    """``Lambda(x) = p'x + 1/2 (x - center)' S (x - center) + offset``."""

    linear: np.ndarray
    quadratic: Optional[np.ndarray] = None
    offset: float = 0.0
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        self.linear = np.atleast_1d(np.asarray(self.linear, dtype=float))
        if self.quadratic is not None:
            S = np.atleast_2d(np.asarray(self.quadratic, dtype=float))
            if np.max(np.abs(S - S.T)) > 1e-12:
                raise ValueError("quadratic storage term must be symmetric")
            self.quadratic = S
            if self.center is None:
                raise ValueError("a quadratic storage term needs its center (x_s)")
        if self.center is not None:
            self.center = np.atleast_1d(np.asarray(self.center, dtype=float))

    @classmethod
    def seeded(cls, ss: SteadyStateGne, S=None) -> "StorageCandidate":
        """Linear part -sum_v lambda_s^v, optionally with a quadratic term centred at x_s."""
        return cls(-ss.lambda_sum, S, 0.0, ss.x_s.copy())

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = float(self.linear @ x) + self.offset
        if self.quadratic is not None:
            d = x - self.center
            val += 0.5 * float(d @ self.quadratic @ d)
        return val

    def gradient(self, x) -> np.ndarray:
        g = self.linear.copy()
        if self.quadratic is not None:
            g = g + self.quadratic @ (np.asarray(x, dtype=float) - self.center)
        return g

    def bounded_below(self, game: LqGame) -> bool:
        """Lower boundedness on the state box cut out by the state-only shared rows."""
        lo, hi = state_box(game)
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            return True
        if self.quadratic is not None and np.min(np.linalg.eigvalsh(self.quadratic)) > 0:
            return True
        # linear part must not decrease along any unbounded direction
        return all((self.linear[i] == 0) or (self.linear[i] > 0 and np.isfinite(lo[i]))
                   or (self.linear[i] < 0 and np.isfinite(hi[i])) for i in range(game.n_x))

    def min_over_box(self, game: LqGame) -> float:
        lo, hi = state_box(game)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return -np.inf if not self.bounded_below(game) else float("nan")
        return min(self(np.array(v)) for v in itertools.product(*zip(lo, hi)))


def state_box(game: LqGame):
    """Per-coordinate bounds implied by shared rows of the form +-c x_i <= d."""
    nx = game.n_x
    lo, hi = np.full(nx, -np.inf), np.full(nx, np.inf)
    for i in game.shared_state_rows:
        row, d = game.C_shared[i, :nx], game.d_shared[i]
        nz = np.flatnonzero(row)
        if len(nz) != 1 or not np.isfinite(d):
            continue
        j = nz[0]
        if row[j] > 0:
            hi[j] = min(hi[j], d / row[j])
        else:
            lo[j] = max(lo[j], d / row[j])
    return lo, hi


def supply(game: LqGame, ss: SteadyStateGne, x, u) -> float:
    return population_cost(game, x, u) - ss.population_cost(game)


def sdi_slacks(game: LqGame, ss: SteadyStateGne, storage: StorageCandidate, traj):
    """Per-stage ``s - (Lambda(x+) - Lambda(x))`` and squared deviations from (x_s, u_s)."""
    traj = _traj(traj)
    N = traj.u.shape[0]
    ls = ss.population_cost(game)
    slack = np.empty(N)
    dev2 = np.empty(N)
    for k in range(N):
        x, u = traj.x[k], traj.u[k]
        x_next = game.A @ x + game.B_joint @ u
        slack[k] = population_cost(game, x, u) - ls - (storage(x_next) - storage(x))
        dev2[k] = float(np.sum((x - ss.x_s) ** 2) + np.sum((u - ss.u_s) ** 2))
    return slack, dev2


def telescoping_gap(game: LqGame, ss: SteadyStateGne, storage: StorageCandidate, traj) -> float:
    """|sum_k slack_k - (J_N - N l_s + Lambda(x_0) - Lambda(x_N))| along ``traj``."""
    traj = _traj(traj)
    slack, _ = sdi_slacks(game, ss, storage, traj)
    N = traj.u.shape[0]
    rhs = (population_trajectory_cost(game, traj) - N * ss.population_cost(game)
           + storage(traj.x[0]) - storage(traj.x[N]))
    return abs(float(np.sum(slack)) - rhs)


@dataclass
class DissipativityReport:
    alpha_coeff: float
    min_slack: float
    verdict: str
    n_points: int
    telescoping_error: float
    worst_point: Optional[tuple] = None      # (pair index, k) of the smallest slack
    available_storage_partial: dict = field(default_factory=dict)

    @property
    def strictly_dissipative(self) -> bool:
        return self.verdict == STRICT

    def summary(self) -> dict:
        return {"verdict": self.verdict, "alpha_coeff": self.alpha_coeff,
                "min_slack": self.min_slack, "n_points": self.n_points,
                "telescoping_error": self.telescoping_error,
                "worst_point": self.worst_point}


def check_sdi(game: LqGame, ss: SteadyStateGne, storage: StorageCandidate, pairs,
              slack_tol: float = 1e-9, eps_cert: float = 1e-6) -> DissipativityReport:
    """Evaluate the strict dissipation inequality at every stage of every pair.

    ``alpha_coeff`` is the largest ``c`` with ``slack_k + slack_tol >= c * dev_k^2`` at all
    points with nonzero deviation (clipped at 0); the tolerance keeps round-off at points
    next to the steady state from driving the ratio to minus infinity.
    """
    alpha, min_slack, worst, n, tele = np.inf, np.inf, None, 0, 0.0
    for i, pair in enumerate(pairs):
        eps = getattr(pair, "epsilon", 0.0)
        if not (eps <= eps_cert):
            raise ValueError(f"pair {i} is not certified (epsilon={eps})")
        slack, dev2 = sdi_slacks(game, ss, storage, pair)
        tele = max(tele, telescoping_gap(game, ss, storage, pair))
        n += len(slack)
        k = int(np.argmin(slack))
        if slack[k] < min_slack:
            min_slack, worst = float(slack[k]), (i, k)
        nz = dev2 > 0
        if np.any(nz):
            alpha = min(alpha, float(np.min((slack[nz] + slack_tol) / dev2[nz])))
    if n == 0:
        min_slack = 0.0
    alpha = max(alpha, 0.0) if np.isfinite(alpha) else np.inf
    if min_slack < -slack_tol:
        verdict, alpha = VIOLATED, 0.0
    elif alpha > 0:
        verdict = STRICT
    else:
        verdict = WEAK
    return DissipativityReport(alpha, min_slack, verdict, n, tele, worst)


def fit_quadratic_storage(game: LqGame, ss: SteadyStateGne, pairs, scales=None,
                          slack_tol: float = 1e-9):
    """Coarse search over S = s*I added to the seeded linear storage; best report wins.

    Ranking: fewest violation (largest min_slack) first, then the largest coefficient.
    """
    scales = np.linspace(-10.0, 10.0, 41) if scales is None else scales
    best = None
    for s in scales:
        cand = StorageCandidate.seeded(ss, s * np.eye(game.n_x))
        rep = check_sdi(game, ss, cand, pairs, slack_tol)
        key = (min(rep.min_slack, 0.0), rep.alpha_coeff)
        if best is None or key > best[0]:
            best = (key, cand, rep)
    return best[1], best[2]


# ------------------------------------------------------------ horizon sweeps


def _solve(game, N, x0, opts):
    return solve_gne(game.replace(N=int(N), x0=np.atleast_1d(np.asarray(x0, dtype=float))), opts)


@dataclass
class AvailableStorage:
    x0: np.ndarray
    horizons: list
    partial: list           # sum_k [-s + c dev^2] per horizon
    estimate: float         # running max
    bounded: bool           # max attained before the largest horizon


def available_storage(game: LqGame, ss: SteadyStateGne, alpha_coeff: float, horizons, x0s,
                      opts: Optional[SolverOptions] = None) -> list:
    """Partial sums of -s + alpha ||dev||^2 along equilibrium pairs, one sequence per x0."""
    c = 0.0 if not np.isfinite(alpha_coeff) else alpha_coeff
    out = []
    ls = ss.population_cost(game)
    for x0 in x0s:
        partial = []
        for N in horizons:
            traj = _solve(game, N, x0, opts).traj
            total = 0.0
            for k in range(int(N)):
                d = np.concatenate([traj.x[k] - ss.x_s, traj.u[k] - ss.u_s])
                total += -(population_cost(game, traj.x[k], traj.u[k]) - ls) + c * float(d @ d)
            partial.append(total)
        run = np.maximum.accumulate(partial)
        bounded = len(partial) > 1 and run[-1] <= run[-2] + 1e-6 * max(1.0, abs(run[-2]))
        out.append(AvailableStorage(np.atleast_1d(np.asarray(x0, dtype=float)), list(horizons),
                                    partial, float(run[-1]), bool(bounded)))
    return out


@dataclass
class OptimalOperation:
    x0: np.ndarray
    horizons: list
    gaps: list              # average stage cost minus l(x_s, u_s)
    passed: bool


def check_optimal_operation(game: LqGame, ss: SteadyStateGne, horizons, x0s, tol: float = 1e-6,
                            opts: Optional[SolverOptions] = None) -> list:
    """Average population cost per stage against the steady-state cost, per x0."""
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be increasing")
    ls = ss.population_cost(game)
    out = []
    for x0 in x0s:
        gaps = []
        for N in horizons:
            traj = _solve(game, N, x0, opts).traj
            gaps.append(population_trajectory_cost(game, traj) / int(N) - ls)
        ok = all(g >= -tol for g in gaps)
        ok = ok and all(b <= a + tol for a, b in zip(gaps, gaps[1:]))
        out.append(OptimalOperation(np.atleast_1d(np.asarray(x0, dtype=float)), horizons,
                                    gaps, bool(ok)))
    return out
