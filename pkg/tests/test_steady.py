import numpy as np
import pytest

from lqgne.errors import Infeasible
from lqgne.steady import (efficiency_gap, solve_central_steady_state, solve_steady_state,
                          steady_epsilon)
from conftest import scalar_game


def stationarity_oracle(game):
    """Unconstrained steady-state equilibrium of the scalar example from its linear KKT system.

    Unknowns (x, u0, u1, lam0, lam1); agent v minimizes l^v over (x, u^v) subject to
    (A - 1) x + b0 u0 + b1 u1 = 0 with multiplier lam^v.
    """
    a = game.A[0, 0] - 1.0
    b = [game.B[0][0, 0], game.B[1][0, 0]]
    q = [game.Q[0][0, 0], game.Q[1][0, 0]]
    r = [[game.R[v][j][0, 0] for j in range(2)] for v in range(2)]
    xr = game.x_ref[0]
    K = np.array([
        [2 * q[0], 0, 0, a, 0],
        [2 * q[1], 0, 0, 0, a],
        [0, 2 * r[0][0], r[0][1], b[0], 0],
        [0, r[1][0], 2 * r[1][1], 0, b[1]],
        [a, b[0], b[1], 0, 0],
    ])
    rhs = np.array([2 * q[0] * xr, 2 * q[1] * xr, 0, 0, 0])
    return np.linalg.solve(K, rhs)


def test_example_steady_state(game, ss):
    x, u0, u1, l0, l1 = stationarity_oracle(game)
    assert ss.x_s[0] == pytest.approx(x, abs=1e-9)
    assert ss.u_s == pytest.approx([u0, u1], abs=1e-9)
    assert ss.lambda_s[0][0] == pytest.approx(l0, abs=1e-9)
    assert ss.lambda_s[1][0] == pytest.approx(l1, abs=1e-9)
    assert ss.x_s[0] == pytest.approx(48 / 185, abs=1e-9)
    assert all(np.all(m == 0) for m in ss.mu_s)
    assert ss.residual.max() <= 1e-8
    assert steady_epsilon(game, ss) <= 1e-8


def test_decoupled_origin():
    g = scalar_game(A=0.5, Bs=(1.0, 1.0), Qs=(1.0, 3.0))
    ss = solve_steady_state(g)
    assert ss.x_s == pytest.approx([0.0], abs=1e-12)
    assert ss.u_s == pytest.approx([0.0, 0.0], abs=1e-12)


def test_empty_steady_state_set():
    # x = -u at rest (A = 2, B = 1); u >= 1 by the private row, but |x| <= 0.1
    g = scalar_game(A=2.0, Bs=(1.0,), x_bound=0.1)
    g = g.replace(G=([[-1.0]],), h=([-1.0],))
    with pytest.raises(Infeasible):
        solve_steady_state(g)
    with pytest.raises(Infeasible):
        solve_central_steady_state(g)


def test_central_not_worse(game, ss):
    central = solve_central_steady_state(game)
    assert central.cost <= ss.population_cost(game) + 1e-9
    assert efficiency_gap(game, ss, central) >= -1e-9
    # central point lies on the steady-state set
    assert abs((game.A[0, 0] - 1) * central.x[0] + game.B_joint[0] @ central.u) <= 1e-9
