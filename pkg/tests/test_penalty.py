import numpy as np
import pytest

from lqgne.errors import Infeasible
from lqgne.game import DimensionMismatch
from lqgne.penalty import (apply_linear_penalty, apply_rotation, apply_terminal_constraint,
                           leaving_arc_deviation, learn_penalty)
from lqgne.solver import solve_gne


def test_zero_penalty_matches_free_end(game):
    g = game.replace(N=12)
    a = solve_gne(g)
    b = solve_gne(apply_linear_penalty(g, [[0.0], [0.0]]))
    assert b.u == pytest.approx(a.u, abs=1e-10)


def test_penalty_dimension_check(game):
    with pytest.raises(DimensionMismatch):
        apply_linear_penalty(game, [[0.0]])


def test_rotation_equals_linear_penalty(game, ss):
    # sum_k lam'(x_{k+1} - x_k) = lam'(x_N - x_0), so a rotated stage cost and the terminal
    # penalty lam'x_N have the same minimizers
    g = game.replace(N=10, x0=[0.8])
    a = solve_gne(apply_linear_penalty(g, ss.lambda_s))
    b = solve_gne(apply_rotation(g, ss.lambda_s))
    assert b.u == pytest.approx(a.u, abs=1e-8)
    c = solve_gne(apply_rotation(g, ss.lambda_sum))   # one vector for all agents
    assert c.epsilon <= 1e-6


@pytest.mark.parametrize("N", [1, 5, 30])
def test_terminal_constraint_from_steady_state(game, ss, N):
    g = apply_terminal_constraint(game.replace(N=N, x0=ss.x_s), ss.x_s)
    pair = solve_gne(g)
    assert np.max(np.abs(pair.x - ss.x_s)) <= 1e-8
    assert pair.epsilon <= 1e-6


def test_terminal_constraint_reaches_target(game, ss):
    pair = solve_gne(apply_terminal_constraint(game.replace(N=20), ss.x_s))
    assert pair.x[-1] == pytest.approx(ss.x_s, abs=1e-9)


def test_unreachable_terminal_target(game):
    with pytest.raises(Infeasible):
        solve_gne(apply_terminal_constraint(game.replace(N=1), [5.0], anchor=None))


def test_learning_iteration_counts(game, ss):
    g = game.replace(N=20)
    s0 = learn_penalty(g, i_max=0, ss=ss)
    assert len(s0.history) == 1 and s0.iteration == 0
    assert all(np.all(p == 0) for p in s0.p)
    s1 = learn_penalty(g, i_max=1, ss=ss)
    assert len(s1.history) == 2 and s1.deltas[1] > 0
    assert s1.deviations[1] < s1.deviations[0]


def test_learning_needs_even_horizon(game):
    with pytest.raises(ValueError):
        learn_penalty(game.replace(N=21))


def test_leaving_arc_deviation_windows(game, ss):
    pair = solve_gne(game.replace(N=40))
    full = leaving_arc_deviation(pair, ss, second_half=False)
    half = leaving_arc_deviation(pair, ss)
    assert full >= half > 0.05
