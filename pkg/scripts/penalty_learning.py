"""Learn the terminal penalty from midpoint co-states and show the leaving arc shrink."""

from pathlib import Path

import numpy as np

from _common import parser, plt, save, write_csv
from lqgne import load_game, solve_gne, solve_steady_state
from lqgne.penalty import apply_linear_penalty, learn_penalty


def main():
    p = parser(__doc__, "out/learning")
    p.add_argument("--N", type=int, default=60)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--imax", type=int, default=3)
    args = p.parse_args()
    game = load_game(args.game, N=args.N, x0=[args.x0])
    ss = solve_steady_state(game)
    state = learn_penalty(game, i_max=args.imax, ss=ss)
    if state.error:
        print(f"stopped early: {state.error}")
    out = Path(args.out)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    rows = []
    for i, pv, delta, dev in state.history:
        pair = solve_gne(apply_linear_penalty(game, pv))
        ax.plot(np.arange(args.N + 1), pair.x[:, 0], label=f"iteration {i}")
        rows.append([i, *[float(a[0]) for a in pv], delta, dev])
        print(f"i={i} p={[f'{a[0]:.6f}' for a in pv]} delta={delta:.3e} deviation={dev:.3e}")
    print(f"lambda_s = {[f'{l[0]:.6f}' for l in ss.lambda_s]}")
    ax.axhline(ss.x_s[0], color="grey", lw=0.8, ls="--")
    ax.set_xlabel("k")
    ax.set_ylabel("x_k")
    ax.legend()
    save(fig, out / "penalty_learning.png")
    write_csv(out / "learning.csv",
              ["iteration"] + [f"p[{v}]" for v in range(game.M)] + ["delta", "leaving_arc_deviation"], rows)


if __name__ == "__main__":
    main()
