import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqgne.game import (DimensionMismatch, GameError, LinearPenalty, NotConvex, TerminalConstraint,
                        agent_cost, bundled_games, dumps, example_game, load_game, loads, rollout,
                        stage_cost, validate, widen_bounds)
from conftest import scalar_game


def test_bundled_example_loads(game):
    assert "two_agent_scalar" in bundled_games()
    assert game.M == 2 and game.n_x == 1 and game.n_u == [1, 1] and game.N == 30
    assert validate(game).ok


def test_yaml_round_trip(game):
    g = game.replace(terminal=TerminalConstraint([0.2], ([1.0], [2.0])), lin=([0.1, 0, 0], [0, 0.2, 0]))
    back = loads(dumps(g))
    assert np.allclose(back.A, g.A) and back.N == g.N
    assert np.allclose(back.terminal.anchor[1], [2.0])
    assert np.allclose(back.lin[1], g.lin[1])
    p = g.replace(terminal=LinearPenalty(([0.5], [-0.5])))
    assert np.allclose(loads(dumps(p)).terminal.p[1], [-0.5])


def test_overrides(game):
    g = load_game("two_agent_scalar", N=7, x0=[0.25])
    assert g.N == 7 and g.x0[0] == 0.25


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_game("/nonexistent/game.yaml")


def test_missing_field():
    with pytest.raises(GameError):
        loads("A: [[1.0]]\n")


def test_declared_dimension_mismatch(game):
    text = dumps(game).replace("n_x: 1", "n_x: 2")
    with pytest.raises(DimensionMismatch):
        loads(text)


def test_validation_rejects_bad_shapes_and_nonconvexity(game):
    with pytest.raises(DimensionMismatch):
        validate(game.replace(x0=[1.0, 2.0])).raise_for_errors()
    with pytest.raises(NotConvex):
        validate(game.replace(R=(([[-1.0]], [[4.0]]), ([[5.0]], [[5.0]])))).raise_for_errors()
    with pytest.raises(NotConvex):
        validate(game.replace(Q=([[-1.0]], [[2.0]]))).raise_for_errors()


def test_validation_anchor_length(game):
    bad = game.replace(terminal=TerminalConstraint([0.0], ([1.0],)))
    with pytest.raises(DimensionMismatch):
        validate(bad).raise_for_errors()


def test_stage_cost_by_hand(game):
    x, u = np.array([0.5]), np.array([0.1, -0.2])
    # agent 0: u0 (4 u0 + 4 u1) + 1 (x - 0.3)^2
    assert stage_cost(game, 0, x, u) == pytest.approx(0.1 * (0.4 - 0.8) + 0.04)
    assert stage_cost(game, 1, x, u) == pytest.approx(-0.2 * (0.5 - 1.0) + 2 * 0.04)


def test_terminal_penalty_enters_agent_cost(game):
    g = game.replace(N=3, terminal=LinearPenalty(([2.0], [0.0])))
    traj = rollout(g, np.zeros((3, 2)))
    base = agent_cost(g, 0, traj, terminal=False)
    assert agent_cost(g, 0, traj) == pytest.approx(base + 2.0 * traj.x[-1, 0])
    assert agent_cost(g, 1, traj) == pytest.approx(agent_cost(g, 1, traj, terminal=False))


def test_widen_bounds(game):
    w = widen_bounds(game, 10)
    assert np.allclose(w.d_shared, 10 * game.d_shared)
    assert np.allclose(w.h[0], [20.0, 20.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.floats(-1, 1))
def test_rollout_satisfies_dynamics(us, x0):
    g = scalar_game(A=1.5, Bs=(1.0, 2.0), Qs=(1.0, 1.0), N=2, x0=x0)
    traj = rollout(g, np.reshape(us, (2, 2)))
    assert traj.dynamics_residual(g) <= 1e-12
    assert traj.x[1, 0] == pytest.approx(1.5 * x0 + us[0] + 2 * us[1])
