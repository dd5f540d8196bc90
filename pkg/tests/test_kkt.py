import numpy as np
import pytest

from lqgne.game import LinearPenalty, constant_trajectory, rollout
from lqgne.kkt import HorizonLayout, constant_duals, horizon_program, kkt_residual
from lqgne.solver import solve_gne


def test_layout_round_trip(game):
    g = game.replace(N=4)
    _, L = horizon_program(g)
    traj = rollout(g, np.arange(8.0).reshape(4, 2) / 10)
    back = L.unpack(L.pack(traj))
    assert np.array_equal(back.x, traj.x) and np.array_equal(back.u, traj.u)


@pytest.mark.parametrize("N", [1, 5, 30])
def test_steady_state_embeds_with_matching_penalty(game, ss, N):
    g = game.replace(N=N, x0=ss.x_s, terminal=LinearPenalty(tuple(ss.lambda_s)))
    traj = constant_trajectory(ss.x_s, ss.u_s, N)
    assert kkt_residual(g, traj, constant_duals(g, ss, N)).max() <= 1e-10


def test_steady_state_not_stationary_without_penalty(game, ss):
    g = game.replace(N=5, x0=ss.x_s)
    traj = constant_trajectory(ss.x_s, ss.u_s, 5)
    assert kkt_residual(g, traj, constant_duals(g, ss, 5)).boundary > 1e-3


def test_solution_residual_and_perturbation(game):
    g = game.replace(N=8)
    pair = solve_gne(g)
    assert pair.residual.max() <= 1e-8
    u = pair.u.copy()
    u[2, 0] += 1e-3
    assert kkt_residual(g, rollout(g, u), pair.duals).max() > 1e-5


def test_costate_recursion(game):
    # without active shared rows, lam_k = l_x + A' lam_{k+1}
    g = game.replace(N=6, x0=[0.2])
    pair = solve_gne(g)
    for v, q in enumerate((1.0, 2.0)):
        lam = pair.duals[v].lam[:, 0]
        assert np.all(np.abs(pair.duals[v].mu) <= 1e-12)
        for k in range(6):
            lx = 2 * q * (pair.x[k, 0] - 0.3)
            assert lam[k] == pytest.approx(lx + 1.5 * lam[k + 1], abs=1e-9)
        assert lam[6] == pytest.approx(0.0, abs=1e-9)
