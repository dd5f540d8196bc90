"""Command line experiment runner.

    lqgne solve two_agent_scalar --N 30 --x0 1 --out runs/solve
    lqgne turnpike-sweep two_agent_scalar --N 10,20,40,60 --x0=-1,0,1 --eps 0.05
    lqgne dissipativity | sensitivity | penalty | learn ...

Exit codes: 0 success, 1 infeasible, 2 no convergence / not certified, 3 bad configuration.
Logging level comes from the GNEP_LOG environment variable (error, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import Infeasible, NoConvergence, SolverError
from .game import GameError, LqGame, load_game
from .solver import GnePair, solve_gne

log = logging.getLogger("lqgne")

EXIT_OK, EXIT_INFEASIBLE, EXIT_NOCONV, EXIT_CONFIG = 0, 1, 2, 3
DEFAULT_HORIZONS = (10, 20, 40, 60)
EPS_CERT = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    game_file: str
    command: str
    horizons: list = field(default_factory=list)
    x0s: list = field(default_factory=list)
    eps: list = field(default_factory=lambda: [0.05])
    penalty: str = "none"
    fd_step: float = 1e-5
    imax: int = 1
    eps_stop: float = 1e-6
    output_dir: Path = Path("out")


# ------------------------------------------------------------------ parsing


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _ints(text: str) -> list:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc
    return vals


def parse_x0s(text: str, n_x: int) -> list:
    """``a,b;c,d`` gives two initial states of size 2; for scalar states ``-1,0,1`` gives three."""
    groups = [g for g in text.split(";") if g.strip()]
    if n_x == 1 and len(groups) == 1:
        return [np.array([v]) for v in _floats(groups[0])]
    out = [np.array(_floats(g)) for g in groups]
    for x in out:
        if x.shape != (n_x,):
            raise ConfigError(f"initial state {x.tolist()} does not have {n_x} entries")
    return out


def _rejoin_negative(argv: list) -> list:
    """Allow ``--x0 -1,0,1`` (argparse would read the value as an option)."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if (a in ("--x0", "--N", "--eps") and i + 1 < len(argv)
                and re.match(r"^-[\d.]", argv[i + 1])):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqgne", description="Finite-horizon LQ dynamic games.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("solve", "solve and certify one equilibrium per (N, x0)"),
                        ("turnpike-sweep", "count stages near the steady state across horizons"),
                        ("dissipativity", "dissipation inequality, available storage, optimal operation"),
                        ("sensitivity", "value gradient and co-state identities"),
                        ("penalty", "solve with a terminal penalty or constraint"),
                        ("learn", "learn the terminal penalty from midpoint co-states")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("game_pos", nargs="?", metavar="game", help="game file or bundled name")
        s.add_argument("--game", help="game file or bundled name")
        s.add_argument("--N", help="horizon(s), comma separated")
        s.add_argument("--x0", help="initial state(s): -1,0,1 or a,b;c,d")
        s.add_argument("--eps", default="0.05", help="turnpike ball radius (list for sweeps)")
        s.add_argument("--penalty", default=None,
                       help="none, lambda_s, file:<path> or terminal")
        s.add_argument("--fd-step", type=float, default=1e-5)
        s.add_argument("--imax", type=int, default=1)
        s.add_argument("--eps-stop", type=float, default=1e-6)
        s.add_argument("--out", default="out", help="output directory")
    return p


def make_config(args) -> tuple:
    name = args.game or args.game_pos
    if not name:
        raise ConfigError("no game given (positional argument or --game)")
    try:
        game = load_game(name)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    horizons = _ints(args.N) if args.N is not None else []
    if args.N is not None and not horizons:
        raise ConfigError("empty horizon list")
    if any(N < 1 for N in horizons):
        raise ConfigError("horizons must be positive")
    if args.x0 is not None:
        x0s = parse_x0s(args.x0, game.n_x)
        if not x0s:
            raise ConfigError("empty initial-state list")
    else:
        x0s = []
    eps = _floats(args.eps)
    if not eps or any(e <= 0 for e in eps):
        raise ConfigError("eps must be positive")
    default_penalty = "lambda_s" if args.command == "penalty" else "none"
    cfg = ExperimentConfig(str(name), args.command, horizons, x0s, eps,
                           args.penalty or default_penalty, args.fd_step, args.imax,
                           args.eps_stop, Path(args.out))
    return cfg, game


# ------------------------------------------------------------------ output


def fmt(v) -> str:
    """Shortest round-trip decimal."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def trajectory_header(game: LqGame) -> list:
    h = ["k"] + [f"x[{i}]" for i in range(game.n_x)]
    for v in range(game.M):
        h += [f"u[{v}][{i}]" for i in range(game.n_u[v])]
    for v in range(game.M):
        h += [f"lambda[{v}][{i}]" for i in range(game.n_x)]
    return h


def trajectory_rows(game: LqGame, pair: GnePair) -> list:
    N = pair.traj.u.shape[0]
    rows = []
    for k in range(N + 1):
        row = [k] + list(pair.traj.x[k])
        row += list(pair.traj.u[k]) if k < N else [None] * game.n_u_total
        for v in range(game.M):
            row += list(pair.duals[v].lam[k])
        rows.append(row)
    return rows


def _tag(N: int, x0) -> str:
    return f"N{N}_x0_" + "_".join(fmt(v) for v in np.atleast_1d(x0))


# ------------------------------------------------------------------ commands


def _horizons(cfg: ExperimentConfig, game: LqGame, sweep: bool) -> list:
    if cfg.horizons:
        return cfg.horizons
    return list(DEFAULT_HORIZONS) if sweep else [game.N]


def _x0s(cfg: ExperimentConfig, game: LqGame, sweep: bool) -> list:
    if cfg.x0s:
        return cfg.x0s
    if sweep and game.x0s:
        return [np.asarray(x, dtype=float) for x in game.x0s]
    return [game.x0.copy()]


def _penalized(cfg: ExperimentConfig, game: LqGame, ss=None):
    from .penalty import apply_linear_penalty, apply_terminal_constraint
    from .steady import solve_steady_state
    mode = cfg.penalty
    if mode == "none":
        return game
    if mode == "lambda_s":
        ss = ss or solve_steady_state(game)
        return apply_linear_penalty(game, ss.lambda_s)
    if mode == "terminal":
        ss = ss or solve_steady_state(game)
        return apply_terminal_constraint(game, ss.x_s)
    if mode.startswith("file:"):
        path = Path(mode[5:])
        if not path.exists():
            raise ConfigError(f"penalty file not found: {path}")
        data = yaml.safe_load(path.read_text())
        p = data["p"] if isinstance(data, dict) else data
        return apply_linear_penalty(game, p)
    raise ConfigError(f"unknown penalty mode {mode!r}")


def cmd_solve(cfg: ExperimentConfig, game: LqGame) -> int:
    base = _penalized(cfg, game)
    runs, code = [], EXIT_OK
    for N in _horizons(cfg, game, False):
        for x0 in _x0s(cfg, game, False):
            g = base.replace(N=N, x0=x0)
            t0 = time.perf_counter()
            pair = solve_gne(g)
            name = f"traj_{_tag(N, x0)}.csv"
            write_csv(cfg.output_dir / name, trajectory_header(g), trajectory_rows(g, pair))
            certified = pair.epsilon <= EPS_CERT
            code = code if certified else EXIT_NOCONV
            runs.append({"N": N, "x0": x0, "file": name, "epsilon": pair.epsilon,
                         "residual": pair.residual.as_dict(), "certified": certified,
                         "method": pair.solver_meta.get("method"),
                         "iterations": pair.solver_meta.get("iterations"),
                         "wall_time": time.perf_counter() - t0})
    write_json(cfg.output_dir / "summary.json",
               {"command": "solve", "game": cfg.game_file, "penalty": cfg.penalty, "runs": runs,
                "verdict": {"certified": all(r["certified"] for r in runs)}})
    return code


def cmd_turnpike_sweep(cfg: ExperimentConfig, game: LqGame) -> int:
    from .steady import solve_steady_state
    from .turnpike import horizon_sweep
    ss = solve_steady_state(game)
    base = _penalized(cfg, game, ss)
    rows, reports = [], []
    horizons, x0s = _horizons(cfg, game, True), _x0s(cfg, game, True)
    for eps in cfg.eps:
        for r in horizon_sweep(base, horizons, x0s, eps, ss):
            reports.append(r)
            rows.append([r.N, *r.x0, eps, r.q_eps, r.outside_count, r.entry_index,
                         r.leaving_index, r.error or ""])
    header = ["N"] + [f"x0[{i}]" for i in range(game.n_x)] + [
        "eps", "q_eps", "outside_count", "entry_index", "leaving_index", "error"]
    write_csv(cfg.output_dir / "turnpike.csv", header, rows)
    verdict = {}
    for eps in cfg.eps:
        for x0 in x0s:
            counts = [r.outside_count for r in reports
                      if r.epsilon == eps and np.allclose(r.x0, x0) and r.ok and r.N >= 40]
            verdict[f"eps={fmt(eps)} x0={fmt(x0[0]) if len(x0) == 1 else x0.tolist()}"] = {
                "outside_count_constant_for_N_ge_40": len(set(counts)) <= 1 if counts else None}
    write_json(cfg.output_dir / "summary.json",
               {"command": "turnpike-sweep", "game": cfg.game_file, "x_s": ss.x_s,
                "reports": [r.summary() for r in reports], "verdict": verdict})
    return EXIT_NOCONV if any(not r.ok for r in reports) else EXIT_OK


def cmd_dissipativity(cfg: ExperimentConfig, game: LqGame) -> int:
    from .dissipativity import (StorageCandidate, available_storage, check_optimal_operation,
                                check_sdi)
    from .steady import solve_steady_state
    ss = solve_steady_state(game)
    horizons, x0s = _horizons(cfg, game, True), _x0s(cfg, game, True)
    pairs, keys = [], []
    for N in horizons:
        for x0 in x0s:
            pairs.append(solve_gne(game.replace(N=N, x0=x0)))
            keys.append((N, x0))
    storage = StorageCandidate.seeded(ss)
    rep = check_sdi(game, ss, storage, pairs)
    avail = available_storage(game, ss, rep.alpha_coeff, horizons, x0s)
    oper = check_optimal_operation(game, ss, sorted(set(horizons)), x0s)
    rows = [[N, *x0, a.partial[j]] for a, x0 in zip(avail, x0s)
            for j, N in enumerate(a.horizons)]
    write_csv(cfg.output_dir / "available_storage.csv",
              ["N"] + [f"x0[{i}]" for i in range(game.n_x)] + ["partial_sum"], rows)
    write_json(cfg.output_dir / "summary.json", {
        "command": "dissipativity", "game": cfg.game_file,
        "storage": {"linear": storage.linear},
        "report": rep.summary(),
        "available_storage": [{"x0": a.x0, "partial": a.partial, "estimate": a.estimate,
                               "bounded": a.bounded} for a in avail],
        "optimal_operation": [{"x0": o.x0, "horizons": o.horizons, "gaps": o.gaps,
                               "passed": o.passed} for o in oper],
        "verdict": {"sdi": rep.verdict, "alpha_coeff": rep.alpha_coeff,
                    "optimal_operation": all(o.passed for o in oper)}})
    return EXIT_OK


def cmd_sensitivity(cfg: ExperimentConfig, game: LqGame) -> int:
    from .dissipativity import StorageCandidate
    from .errors import HypothesisViolated
    from .sensitivity import dual_turnpike_gap, storage_gradient_check, value_gradient_check
    from .steady import solve_steady_state
    N = _horizons(cfg, game, False)[0]
    x0 = _x0s(cfg, game, False)[0]
    g = game.replace(N=N, x0=x0)
    rep = value_gradient_check(g, cfg.fd_step)
    ss = solve_steady_state(game)
    try:
        sg = {"residual": storage_gradient_check(game, ss, StorageCandidate.seeded(ss))}
    except HypothesisViolated as exc:
        sg = {"error": str(exc), **exc.info}
    gaps = dual_turnpike_gap(game, ss, N)
    write_json(cfg.output_dir / "summary.json", {
        "command": "sensitivity", "game": cfg.game_file, "N": N, "x0": x0,
        "value_gradient": rep.summary(), "storage_gradient": sg,
        "dual_turnpike_gap_at_x_s": gaps,
        "verdict": {"value_gradient_identity": rep.identity_holds(),
                    "constraints_active": rep.constraints_active}})
    return EXIT_OK


def cmd_penalty(cfg: ExperimentConfig, game: LqGame) -> int:
    from .penalty import leaving_arc_deviation
    from .steady import solve_steady_state
    from .turnpike import measure_turnpike
    ss = solve_steady_state(game)
    base = _penalized(cfg, game, ss)
    runs, code = [], EXIT_OK
    eps = cfg.eps[0]
    for N in _horizons(cfg, game, False):
        for x0 in _x0s(cfg, game, False):
            g = base.replace(N=N, x0=x0)
            pair = solve_gne(g)
            name = f"traj_{_tag(N, x0)}.csv"
            write_csv(cfg.output_dir / name, trajectory_header(g), trajectory_rows(g, pair))
            tp = measure_turnpike(pair, ss, eps)
            code = code if pair.epsilon <= EPS_CERT else EXIT_NOCONV
            runs.append({"N": N, "x0": x0, "file": name, "epsilon": pair.epsilon,
                         "entry_index": tp.entry_index, "leaving_index": tp.leaving_index,
                         "leaving_arc_deviation": leaving_arc_deviation(pair, ss, eps),
                         "no_leaving_arc": tp.entry_index is not None and tp.leaving_index == N})
    write_json(cfg.output_dir / "summary.json", {
        "command": "penalty", "game": cfg.game_file, "penalty": cfg.penalty, "eps": eps,
        "lambda_s": ss.lambda_s, "runs": runs,
        "verdict": {"no-leaving-arc": all(r["no_leaving_arc"] for r in runs)}})
    return code


def cmd_learn(cfg: ExperimentConfig, game: LqGame) -> int:
    from .penalty import learn_penalty
    N = _horizons(cfg, game, False)[0]
    x0 = _x0s(cfg, game, False)[0]
    if N % 2:
        raise ConfigError("learning needs an even horizon")
    state = learn_penalty(game.replace(N=N, x0=x0), i_max=cfg.imax, eps_stop=cfg.eps_stop,
                          eps=cfg.eps[0])
    header = ["i", "delta", "leaving_arc_deviation"] + [
        f"p[{v}][{i}]" for v in range(game.M) for i in range(game.n_x)]
    rows = [[i, d, dev, *np.concatenate(p)] for i, p, d, dev in state.history]
    write_csv(cfg.output_dir / "learn.csv", header, rows)
    devs = state.deviations
    write_json(cfg.output_dir / "summary.json", {
        "command": "learn", "game": cfg.game_file, "N": N, "x0": x0,
        "history": [{"i": i, "p": p, "delta": d, "leaving_arc_deviation": dev}
                    for i, p, d, dev in state.history],
        "error": state.error,
        "verdict": {"iterations": state.iteration,
                    "deviation_reduction": (1 - devs[1] / devs[0]) if len(devs) > 1 and devs[0] > 0
                    else None}})
    return EXIT_NOCONV if state.error else EXIT_OK


COMMANDS = {"solve": cmd_solve, "turnpike-sweep": cmd_turnpike_sweep,
            "dissipativity": cmd_dissipativity, "sensitivity": cmd_sensitivity,
            "penalty": cmd_penalty, "learn": cmd_learn}


def main(argv: Optional[list] = None) -> int:
    level = os.environ.get("GNEP_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = _rejoin_negative(list(sys.argv[1:] if argv is None else argv))
    args = build_parser().parse_args(argv)
    try:
        cfg, game = make_config(args)
        return COMMANDS[cfg.command](cfg, game)
    except (ConfigError, GameError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NoConvergence, SolverError) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
