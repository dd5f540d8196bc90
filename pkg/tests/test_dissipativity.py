import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqgne.dissipativity import (STRICT, VIOLATED, StorageCandidate, available_storage,
                                 check_optimal_operation, check_sdi, sdi_slacks, state_box,
                                 telescoping_gap)
from lqgne.game import constant_trajectory, rollout
from lqgne.solver import pair_from_trajectory, solve_gne
from lqgne.game import example_game
from lqgne.steady import solve_steady_state
from conftest import scalar_game

EXAMPLE = example_game()
EXAMPLE_SS = solve_steady_state(EXAMPLE)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.6, 0.6), min_size=10, max_size=10), st.floats(-1, 1),
       st.floats(-3, 3), st.floats(-5, 5))
def test_telescoping_identity(us, x0, p, s):
    g = EXAMPLE.replace(N=5, x0=[x0])
    ss = EXAMPLE_SS
    traj = rollout(g, np.reshape(us, (5, 2)))
    assert telescoping_gap(g, ss, StorageCandidate([p], [[s]], 0.0, ss.x_s), traj) <= 1e-10


def test_steady_pair_has_zero_slack(game, ss):
    traj = constant_trajectory(ss.x_s, ss.u_s, 4)
    slack, dev2 = sdi_slacks(game, ss, StorageCandidate.seeded(ss), traj)
    assert np.all(np.abs(slack) <= 1e-12) and np.all(dev2 == 0)


def test_strict_for_decoupled_regulator():
    # single agent, x_ref = 0, steady state at the origin: the supply is positive definite
    g = scalar_game(A=0.5, Bs=(1.0,), Qs=(1.0,), N=10, x0=1.0)
    ss = solve_steady_state(g)
    pairs = [solve_gne(g.replace(x0=[x])) for x in (-1.0, 0.5, 1.0)]
    rep = check_sdi(g, ss, StorageCandidate.seeded(ss), pairs)
    assert rep.verdict == STRICT and rep.alpha_coeff > 0 and rep.min_slack >= -1e-9


def test_violation_detected_with_wrong_storage(game, ss):
    pairs = [solve_gne(game.replace(N=20, x0=[1.0]))]
    wrong = StorageCandidate(ss.lambda_sum * 20)
    rep = check_sdi(game, ss, wrong, pairs)
    assert rep.verdict == VIOLATED and rep.min_slack < 0 and rep.alpha_coeff == 0


def test_uncertified_pair_rejected(game, ss):
    g = game.replace(N=5)
    traj = rollout(g, np.zeros((5, 2)))
    pair = pair_from_trajectory(g, traj)
    assert pair.epsilon > 1e-6
    with pytest.raises(ValueError):
        check_sdi(g, ss, StorageCandidate.seeded(ss), [pair])


def test_state_box_and_bounds(game, ss):
    lo, hi = state_box(game)
    assert lo == pytest.approx([-1.0]) and hi == pytest.approx([1.0])
    st_ = StorageCandidate.seeded(ss)
    assert st_.bounded_below(game)
    assert st_.min_over_box(game) == pytest.approx(-abs(ss.lambda_sum[0]))
    free = scalar_game()
    assert not StorageCandidate([1.0]).bounded_below(free)
    assert StorageCandidate([1.0], [[1.0]], center=[0.0]).bounded_below(free)


def test_storage_rejects_asymmetric():
    with pytest.raises(ValueError):
        StorageCandidate([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]], center=[0.0, 0.0])


def test_optimal_operation_requires_increasing(game, ss):
    with pytest.raises(ValueError):
        check_optimal_operation(game, ss, [20, 10], [[1.0]])


def test_available_storage_shape(game, ss):
    out = available_storage(game, ss, 0.0, [5, 10], [[0.0], [1.0]])
    assert len(out) == 2 and all(len(a.partial) == 2 for a in out)
