"""Suppressing the leaving arc: terminal penalties, terminal constraints, rotated costs and
learning the penalty from midpoint co-states."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SolverError
from .game import DimensionMismatch, LinearPenalty, LqGame, TerminalConstraint
from .solver import SolverOptions, solve_gne
from .steady import SteadyStateGne, solve_steady_state
from .turnpike import measure_turnpike

log = logging.getLogger(__name__)


def _per_agent(game: LqGame, p, what: str) -> list:
    arr = [np.asarray(pv, dtype=float).reshape(-1) for pv in p]
    if len(arr) != game.M or any(a.shape != (game.n_x,) for a in arr):
        raise DimensionMismatch(f"{what}: expected {game.M} vectors of size {game.n_x}")
    return arr


def apply_linear_penalty(game: LqGame, p) -> LqGame:
    """Terminal cost x_N' p^v for every agent v."""
    p = _per_agent(game, p, "penalty")
    return game.replace(terminal=LinearPenalty(tuple(tuple(a.tolist()) for a in p)))


def apply_terminal_constraint(game: LqGame, x_target, anchor="steady") -> LqGame:
    """Impose ``x_N = x_target``.

    ``anchor`` selects the equilibrium: terminal co-states are ``anchor[v] + sigma`` with a
    common ``sigma``. The default anchors at the steady-state multipliers, so that from
    ``x0 = x_s`` the constant steady-state trajectory is returned; ``None`` gives the
    plain common-multiplier selection.
    """
    x_target = np.asarray(x_target, dtype=float).reshape(-1)
    if x_target.shape != (game.n_x,):
        raise DimensionMismatch(f"terminal target must have size {game.n_x}")
    if isinstance(anchor, str):
        if anchor != "steady":
            raise ValueError(f"unknown anchor {anchor!r}")
        base = game.replace(terminal=None)
        anchor = solve_steady_state(base).lambda_s
    if anchor is not None:
        anchor = tuple(tuple(a.tolist()) for a in _per_agent(game, anchor, "anchor"))
    return game.replace(terminal=TerminalConstraint(tuple(x_target.tolist()), anchor))


def apply_rotation(game: LqGame, lambda_s) -> LqGame:
    """Add lambda'(A x + B u - x) to each stage cost (one vector for all agents, or one per agent).

    For linear dynamics the rotation is a linear term in (x, u), so the game stays LQ.
    """
    lam = np.asarray(lambda_s, dtype=float)
    if lam.ndim == 1 or (lam.ndim == 2 and lam.shape[0] == 1 and game.M != 1):
        lams = [lam.reshape(-1)] * game.M
    else:
        lams = list(lam)
    lams = _per_agent(game, lams, "rotation multiplier")
    E = np.hstack([game.A - np.eye(game.n_x), game.B_joint])
    lin = [game.linear_term(v) + E.T @ lams[v] for v in range(game.M)]
    return game.replace(lin=tuple(tuple(l.tolist()) for l in lin))


def leaving_arc_deviation(traj, ss: SteadyStateGne, eps: float = 0.05,
                          second_half: bool = True) -> float:
    """max ||x_k - x_s|| from the first entry into the eps-ball through k = N.

    With ``second_half`` the window also starts no earlier than N/2, so that the tail of the
    entry arc is not counted as leaving-arc deviation.
    """
    rep = measure_turnpike(traj, ss, eps)
    if rep.entry_index is None:
        return float(np.max(rep.state_deviation))
    start = max(rep.entry_index, rep.N // 2) if second_half else rep.entry_index
    return float(np.max(rep.state_deviation[start:]))


@dataclass
class PenaltyLearnState:
    iteration: int
    p: list
    delta: float
    history: list = field(default_factory=list)   # (i, p_i, delta_i, leaving-arc deviation)
    error: Optional[str] = None

    @property
    def deltas(self) -> list:
        return [h[2] for h in self.history]

    @property
    def deviations(self) -> list:
        return [h[3] for h in self.history]


def learn_penalty(game: LqGame, i_max: int = 5, eps_stop: float = 1e-6, p0=None,
                  eps: float = 0.05, ss: Optional[SteadyStateGne] = None,
                  opts: Optional[SolverOptions] = None) -> PenaltyLearnState:
    """Repeatedly solve with terminal penalty p_i and set p_{i+1}^v to the co-state at N/2.

    Stops after iteration ``i_max`` or once the change delta_i drops to ``eps_stop``.
    """
    if game.N % 2:
        raise ValueError("the horizon must be even so that N/2 is a stage")
    ss = ss or solve_steady_state(game)
    p = [np.zeros(game.n_x) for _ in range(game.M)] if p0 is None else _per_agent(game, p0, "p0")
    state = PenaltyLearnState(0, p, 0.0)
    i, delta = 0, 0.0
    while True:
        try:
            pair = solve_gne(apply_linear_penalty(game, p), opts)
        except SolverError as exc:
            state.error = f"{type(exc).__name__}: {exc}"
            log.warning("penalty learning stopped at iteration %d: %s", i, exc)
            return state
        dev = leaving_arc_deviation(pair, ss, eps)
        state.history.append((i, [a.copy() for a in p], delta, dev))
        state.iteration, state.p, state.delta = i, p, delta
        log.info("iteration %d: delta=%.3g leaving-arc deviation=%.3g", i, delta, dev)
        if i >= i_max or (i >= 1 and delta <= eps_stop):
            return state
        mid = game.N // 2
        p_new = [np.asarray(pair.duals[v].lam[mid]).copy() for v in range(game.M)]
        delta = float(sum(np.linalg.norm(a - b) for a, b in zip(p_new, p)))
        p = p_new
        i += 1
