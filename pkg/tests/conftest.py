import numpy as np
import pytest

from lqgne.game import LqGame, example_game
from lqgne.steady import solve_steady_state


def scalar_game(A=0.5, Bs=(1.0,), Qs=(1.0,), R=None, x_ref=0.0, N=5, x0=1.0,
                u_bound=None, x_bound=None, **kw) -> LqGame:
    """Scalar-state game with one scalar input per agent; R defaults to the identity coupling."""
    M = len(Bs)
    R = R if R is not None else [[1.0 if v == j else 0.0 for j in range(M)] for v in range(M)]
    rows, d = [], []
    if x_bound is not None:
        rows += [[1.0] + [0.0] * M, [-1.0] + [0.0] * M]
        d += [x_bound, x_bound]
    C = np.array(rows, dtype=float).reshape(-1, 1 + M)
    if u_bound is None:
        G, h = tuple(np.zeros((0, 1)) for _ in range(M)), tuple([] for _ in range(M))
    else:
        G, h = tuple([[1.0], [-1.0]] for _ in range(M)), tuple([u_bound, u_bound] for _ in range(M))
    return LqGame(A=[[A]], B=tuple([[b]] for b in Bs), Q=tuple([[q]] for q in Qs),
                  x_ref=[x_ref], R=tuple(tuple([[r]] for r in row) for row in R),
                  C_shared=C, d_shared=d, G=G, h=h, N=N, x0=[x0], **kw)


@pytest.fixture(scope="session")
def game():
    return example_game()


@pytest.fixture(scope="session")
def ss(game):
    return solve_steady_state(game)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
