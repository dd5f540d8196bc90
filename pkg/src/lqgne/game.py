"""Linear-quadratic-polytopic dynamic games.

A game couples ``M`` agents through shared linear dynamics

    x_{k+1} = A x_k + sum_j B[j] u^j_k,

per-agent quadratic stage costs

    l^v(x, u) = u^v' sum_j R[v][j] u^j + (x - x_ref)' Q[v] (x - x_ref) + lin[v]' [x; u]

(no 1/2 factor), shared polytopic constraints ``C_shared [x; u] <= d_shared`` and
per-agent input constraints ``G[v] u^v <= h[v]``. Agents are indexed from 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

EIG_TOL = 1e-10
SYM_TOL = 1e-12

DATA_DIR = Path(__file__).parent / "data"


class GameError(ValueError):
    """Base class for invalid game descriptions."""


class DimensionMismatch(GameError):
    pass


class NotConvex(GameError):
    pass


def _frozen(a, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        if ndim == 2 and arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif ndim == 1 and arr.ndim == 0:
            arr = arr.reshape(1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LinearPenalty:
    """Terminal cost ``V_f^v(x) = p[v]' x`` for every agent."""

    p: tuple

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(_frozen(pv, 1) for pv in self.p))


@dataclass(frozen=True)
class TerminalConstraint:
    """Point-wise terminal constraint ``x_N = x_target`` shared by all agents.

    The constraint is priced by one common multiplier ``sigma`` on top of per-agent
    ``anchor`` vectors, i.e. the terminal co-state of agent v is ``anchor[v] + sigma``.
    Since ``x_N`` is fixed, anchors only shift each agent's cost by a constant; they pick
    which of the (otherwise non-unique) equilibria is returned.
    """

    x_target: np.ndarray
    anchor: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "x_target", _frozen(self.x_target, 1))
        if self.anchor is not None:
            object.__setattr__(self, "anchor", tuple(_frozen(a, 1) for a in self.anchor))


Terminal = Union[None, LinearPenalty, TerminalConstraint]


@dataclass(frozen=True)
class LqGame:
    A: np.ndarray
    B: tuple
    Q: tuple
    x_ref: np.ndarray
    R: tuple
    C_shared: np.ndarray
    d_shared: np.ndarray
    G: tuple
    h: tuple
    N: int
    x0: np.ndarray
    terminal: Terminal = None
    # apply state-only shared rows to x_N as well (constraints over k = 0..N)
    shared_terminal: bool = True
    # optional per-agent linear stage-cost terms over [x; u]
    lin: Optional[tuple] = None
    # finite sample of initial conditions used by sweeps
    x0s: tuple = ()

    def __post_init__(self):
        s = object.__setattr__
        s(self, "A", _frozen(self.A, 2))
        s(self, "B", tuple(_frozen(b, 2) for b in self.B))
        s(self, "Q", tuple(_frozen(q, 2) for q in self.Q))
        s(self, "x_ref", _frozen(self.x_ref, 1))
        s(self, "R", tuple(tuple(_frozen(r, 2) for r in row) for row in self.R))
        C = np.array(self.C_shared, dtype=float)
        if C.size == 0:
            C = C.reshape(0, self.A.shape[0] + sum(b.shape[1] for b in self.B))
        s(self, "C_shared", _frozen(C, 2))
        s(self, "d_shared", _frozen(np.array(self.d_shared, dtype=float).reshape(-1), 1))
        G = []
        for g, b in zip(self.G, self.B):
            g = np.array(g, dtype=float)
            if g.size == 0:
                g = g.reshape(0, b.shape[1])
            G.append(_frozen(g, 2))
        s(self, "G", tuple(G))
        s(self, "h", tuple(_frozen(np.array(hv, dtype=float).reshape(-1), 1) for hv in self.h))
        s(self, "N", int(self.N))
        s(self, "x0", _frozen(self.x0, 1))
        if self.lin is not None:
            s(self, "lin", tuple(_frozen(l, 1) for l in self.lin))
        s(self, "x0s", tuple(_frozen(x, 1) for x in self.x0s))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> list:
        return [b.shape[1] for b in self.B]

    @property
    def M(self) -> int:
        return len(self.B)

    @property
    def n_u_total(self) -> int:
        return sum(self.n_u)

    def u_slice(self, v: int) -> slice:
        """Columns of agent ``v`` inside the joint input vector."""
        start = sum(self.n_u[:v])
        return slice(start, start + self.n_u[v])

    @property
    def B_joint(self) -> np.ndarray:
        return np.hstack(self.B)

    @property
    def R_joint(self) -> np.ndarray:
        """Block matrix with ``R[v][j]`` in block position (v, j)."""
        return np.block([[np.atleast_2d(r) for r in row] for row in self.R])

    def linear_term(self, v: int) -> np.ndarray:
        if self.lin is None:
            return np.zeros(self.n_x + self.n_u_total)
        return np.asarray(self.lin[v])

    @property
    def shared_state_rows(self) -> np.ndarray:
        """Indices of shared rows that involve the state only."""
        Cu = self.C_shared[:, self.n_x:]
        return np.flatnonzero(np.all(Cu == 0.0, axis=1))

    def terminal_penalty(self, v: int) -> np.ndarray:
        """Linear weight on ``x_N`` in agent ``v``'s cost (penalty or terminal anchor)."""
        if isinstance(self.terminal, LinearPenalty):
            return np.asarray(self.terminal.p[v])
        if isinstance(self.terminal, TerminalConstraint) and self.terminal.anchor is not None:
            return np.asarray(self.terminal.anchor[v])
        return np.zeros(self.n_x)

    def replace(self, **changes) -> "LqGame":
        return dataclasses.replace(self, **changes)


@dataclass
class Trajectory:
    """States ``x`` of shape (N+1, n_x) and joint inputs ``u`` of shape (N, sum n_u)."""

    x: np.ndarray
    u: np.ndarray

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def agent_inputs(self, game: LqGame, v: int) -> np.ndarray:
        return self.u[:, game.u_slice(v)]

    def dynamics_residual(self, game: LqGame) -> float:
        if self.N == 0:
            return 0.0
        pred = self.x[:-1] @ game.A.T + self.u @ game.B_joint.T
        return float(np.max(np.abs(self.x[1:] - pred)))


def rollout(game: LqGame, u: np.ndarray, x0: Optional[np.ndarray] = None) -> Trajectory:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    x = np.empty((u.shape[0] + 1, game.n_x))
    x[0] = game.x0 if x0 is None else x0
    Bj = game.B_joint
    for k in range(u.shape[0]):
        x[k + 1] = game.A @ x[k] + Bj @ u[k]
    return Trajectory(x, u)


def constant_trajectory(x_s, u_s, N: int) -> Trajectory:
    x_s = np.asarray(x_s, dtype=float).reshape(-1)
    u_s = np.asarray(u_s, dtype=float).reshape(-1)
    return Trajectory(np.tile(x_s, (N + 1, 1)), np.tile(u_s, (N, 1)))


# ---------------------------------------------------------------- costs


def stage_cost(game: LqGame, v: int, x, u) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != game.n_x or u.shape[0] != game.n_u_total:
        raise DimensionMismatch(f"expected x of size {game.n_x} and u of size {game.n_u_total}")
    uv = u[game.u_slice(v)]
    coupling = sum(game.R[v][j] @ u[game.u_slice(j)] for j in range(game.M))
    dx = x - game.x_ref
    cost = uv @ coupling + dx @ game.Q[v] @ dx
    if game.lin is not None:
        cost += game.lin[v] @ np.concatenate([x, u])
    return float(cost)


def population_cost(game: LqGame, x, u) -> float:
    return sum(stage_cost(game, v, x, u) for v in range(game.M))


def agent_cost(game: LqGame, v: int, traj: Trajectory, terminal: bool = True) -> float:
    """Cumulative cost ``J_N^v`` along ``traj``, plus the linear terminal penalty if any."""
    J = sum(stage_cost(game, v, traj.x[k], traj.u[k]) for k in range(traj.N))
    if terminal:
        J += float(game.terminal_penalty(v) @ traj.x[-1])
    return J


def population_trajectory_cost(game: LqGame, traj: Trajectory) -> float:
    return sum(population_cost(game, traj.x[k], traj.u[k]) for k in range(traj.N))


# ------------------------------------------------------------ validation


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, detail, error class)

    def add(self, name: str, passed: bool, detail: str = "", error=GameError):
        self.checks.append((name, bool(passed), detail, error))

    @property
    def ok(self) -> bool:
        return all(c[1] for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c[1]]

    @property
    def error(self):
        """Exception class of the first failed check, or None."""
        f = self.failures
        return f[0][3] if f else None

    def raise_for_errors(self):
        f = self.failures
        if f:
            name, _, detail, err = f[0]
            raise err(f"{name}: {detail}")

    def __str__(self):
        return "\n".join(f"[{'pass' if ok else 'FAIL'}] {name} {detail}".rstrip()
                         for name, ok, detail, _ in self.checks)


def _shape_check(report, name, arr, shape):
    ok = tuple(arr.shape) == tuple(shape)
    report.add(name, ok, "" if ok else f"shape {arr.shape} != {shape}", DimensionMismatch)
    return ok


def validate(game: LqGame) -> ValidationReport:
    """Check dimensions and the convexity assumptions of every agent subproblem."""
    rep = ValidationReport()
    n_x = game.A.shape[0]
    rep.add("A square", game.A.ndim == 2 and game.A.shape[0] == game.A.shape[1],
            str(game.A.shape), DimensionMismatch)
    M = len(game.B)
    rep.add("M >= 1", M >= 1, f"M={M}", DimensionMismatch)
    rep.add("N >= 1", game.N >= 1, f"N={game.N}", DimensionMismatch)
    for name, seq in (("Q", game.Q), ("R", game.R), ("G", game.G), ("h", game.h)):
        rep.add(f"len({name}) == M", len(seq) == M, f"{len(seq)} != {M}", DimensionMismatch)
    if not rep.ok:
        return rep
    n_u = [b.shape[1] for b in game.B]
    for v in range(M):
        _shape_check(rep, f"B[{v}]", game.B[v], (n_x, n_u[v]))
        _shape_check(rep, f"Q[{v}]", game.Q[v], (n_x, n_x))
        rep.add(f"len(R[{v}]) == M", len(game.R[v]) == M, "", DimensionMismatch)
        if len(game.R[v]) == M:
            for j in range(M):
                _shape_check(rep, f"R[{v}][{j}]", game.R[v][j], (n_u[v], n_u[j]))
        _shape_check(rep, f"G[{v}]", game.G[v], (game.h[v].shape[0], n_u[v]))
    nz = n_x + sum(n_u)
    _shape_check(rep, "x_ref", game.x_ref, (n_x,))
    _shape_check(rep, "x0", game.x0, (n_x,))
    _shape_check(rep, "C_shared", game.C_shared, (game.d_shared.shape[0], nz))
    for i, x in enumerate(game.x0s):
        _shape_check(rep, f"x0s[{i}]", x, (n_x,))
    if game.lin is not None:
        rep.add("len(lin) == M", len(game.lin) == M, "", DimensionMismatch)
        for v, l in enumerate(game.lin):
            _shape_check(rep, f"lin[{v}]", l, (nz,))
    if isinstance(game.terminal, LinearPenalty):
        rep.add("len(p) == M", len(game.terminal.p) == M, "", DimensionMismatch)
        for v, p in enumerate(game.terminal.p):
            _shape_check(rep, f"p[{v}]", p, (n_x,))
    elif isinstance(game.terminal, TerminalConstraint):
        _shape_check(rep, "x_target", game.terminal.x_target, (n_x,))
        if game.terminal.anchor is not None:
            rep.add("len(anchor) == M", len(game.terminal.anchor) == M, "", DimensionMismatch)
            for v, a in enumerate(game.terminal.anchor):
                _shape_check(rep, f"anchor[{v}]", a, (n_x,))
    if not rep.ok:
        return rep

    arrays = [game.A, game.x_ref, game.x0, game.C_shared, game.d_shared, *game.B, *game.Q,
              *game.G, *(r for row in game.R for r in row)]
    rep.add("finite data", all(np.all(np.isfinite(a)) for a in arrays), "", GameError)
    rep.add("finite bounds", all(np.all(~np.isnan(hv)) for hv in game.h), "", GameError)

    for v in range(M):
        Qv = game.Q[v]
        sym = np.max(np.abs(Qv - Qv.T)) <= SYM_TOL if Qv.size else True
        rep.add(f"Q[{v}] symmetric", sym, "", NotConvex)
        if sym and Qv.size:
            lmin = float(np.min(np.linalg.eigvalsh(Qv)))
            rep.add(f"Q[{v}] psd", lmin >= -EIG_TOL, f"min eig {lmin:.3g}", NotConvex)
        Rvv = game.R[v][v]
        sym = np.max(np.abs(Rvv - Rvv.T)) <= SYM_TOL
        rep.add(f"R[{v}][{v}] symmetric", sym, "", NotConvex)
        if sym:
            lmin = float(np.min(np.linalg.eigvalsh(Rvv)))
            rep.add(f"R[{v}][{v}] positive definite", lmin > EIG_TOL, f"min eig {lmin:.3g}",
                    NotConvex)
    return rep


def ensure_valid(game: LqGame) -> LqGame:
    validate(game).raise_for_errors()
    return game


# ---------------------------------------------------------------- files


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def to_dict(game: LqGame) -> dict:
    d = {
        "n_x": game.n_x,
        "n_u": game.n_u,
        "M": game.M,
        "A": _tolist(game.A),
        "B": [_tolist(b) for b in game.B],
        "Q": [_tolist(q) for q in game.Q],
        "x_ref": _tolist(game.x_ref),
        "R": [[_tolist(r) for r in row] for row in game.R],
        "C_shared": _tolist(game.C_shared),
        "d_shared": _tolist(game.d_shared),
        "shared_terminal": bool(game.shared_terminal),
        "G": [_tolist(g) for g in game.G],
        "h": [_tolist(h) for h in game.h],
        "N": int(game.N),
        "x0": _tolist(game.x0),
    }
    if isinstance(game.terminal, LinearPenalty):
        d["terminal"] = {"type": "linear_penalty", "p": [_tolist(p) for p in game.terminal.p]}
    elif isinstance(game.terminal, TerminalConstraint):
        d["terminal"] = {"type": "terminal_constraint",
                         "x_target": _tolist(game.terminal.x_target)}
        if game.terminal.anchor is not None:
            d["terminal"]["anchor"] = [_tolist(a) for a in game.terminal.anchor]
    else:
        d["terminal"] = None
    if game.lin is not None:
        d["lin"] = [_tolist(l) for l in game.lin]
    if game.x0s:
        d["x0s"] = [_tolist(x) for x in game.x0s]
    return d


def from_dict(d: dict) -> LqGame:
    missing = [k for k in ("A", "B", "Q", "x_ref", "R", "N", "x0") if k not in d]
    if missing:
        raise GameError(f"missing fields: {', '.join(missing)}")
    M = len(d["B"])
    term = d.get("terminal")
    if term is None:
        terminal = None
    elif term.get("type") == "linear_penalty":
        terminal = LinearPenalty(tuple(term["p"]))
    elif term.get("type") == "terminal_constraint":
        anchor = term.get("anchor")
        terminal = TerminalConstraint(term["x_target"], None if anchor is None else tuple(anchor))
    else:
        raise GameError(f"unknown terminal type {term!r}")
    A = np.array(d["A"], dtype=float).reshape(np.shape(d["A"]) or (1, 1))
    n_x = A.shape[0] if A.ndim == 2 else 1
    n_u = [np.array(b, dtype=float).reshape(n_x, -1).shape[1] for b in d["B"]]
    game = LqGame(
        A=A,
        B=tuple(d["B"]),
        Q=tuple(d["Q"]),
        x_ref=d["x_ref"],
        R=tuple(tuple(row) for row in d["R"]),
        C_shared=d.get("C_shared", np.zeros((0, n_x + sum(n_u)))),
        d_shared=d.get("d_shared", []),
        G=tuple(d.get("G", [np.zeros((0, nu)) for nu in n_u])),
        h=tuple(d.get("h", [[] for _ in range(M)])),
        N=d["N"],
        x0=d["x0"],
        terminal=terminal,
        shared_terminal=bool(d.get("shared_terminal", True)),
        lin=tuple(d["lin"]) if d.get("lin") is not None else None,
        x0s=tuple(d.get("x0s", ())),
    )
    declared = {"n_x": game.n_x, "n_u": game.n_u, "M": game.M}
    for key, actual in declared.items():
        if key in d and d[key] != actual:
            raise DimensionMismatch(f"declared {key}={d[key]} but matrices imply {actual}")
    return game


def dumps(game: LqGame) -> str:
    return yaml.safe_dump(to_dict(game), sort_keys=False, default_flow_style=None, width=100)


def loads(text: str) -> LqGame:
    d = yaml.safe_load(text)
    if not isinstance(d, dict):
        raise GameError("game description must be a mapping")
    return from_dict(d)


def save_game(game: LqGame, path) -> None:
    Path(path).write_text(dumps(game))


def bundled_games() -> list:
    return sorted(p.stem for p in DATA_DIR.glob("*.yaml"))


def resolve_game_path(name_or_path) -> Path:
    """A filesystem path, or the name of a bundled game."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    bundled = DATA_DIR / f"{name_or_path}.yaml"
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"game file not found: {name_or_path}")


def load_game(name_or_path, **overrides) -> LqGame:
    game = loads(resolve_game_path(name_or_path).read_text())
    return game.replace(**overrides) if overrides else game


def example_game(**overrides) -> LqGame:
    """The bundled two-agent scalar example (``two_agent_scalar``)."""
    return load_game("two_agent_scalar", **overrides)


def widen_bounds(game: LqGame, factor: float) -> LqGame:
    """Scale every constraint bound by ``factor`` (used to make constraints inactive)."""
    return game.replace(d_shared=game.d_shared * factor,
                        h=tuple(hv * factor for hv in game.h))
