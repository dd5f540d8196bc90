"""Free end point, linear penalty lambda_s and terminal constraint x_N = x_s, side by side."""

from pathlib import Path

import numpy as np

from _common import parser, plt, save, write_csv
from lqgne import load_game, solve_gne, solve_steady_state
from lqgne.penalty import apply_linear_penalty, apply_terminal_constraint, leaving_arc_deviation


def main():
    p = parser(__doc__, "out/terminal")
    p.add_argument("--N", type=int, default=60)
    p.add_argument("--x0", type=float, default=1.0)
    args = p.parse_args()
    game = load_game(args.game, N=args.N, x0=[args.x0])
    ss = solve_steady_state(game)
    variants = {
        "free end": game,
        "penalty lambda_s": apply_linear_penalty(game, ss.lambda_s),
        "x_N = x_s": apply_terminal_constraint(game, ss.x_s),
    }
    out = Path(args.out)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    rows = []
    for name, g in variants.items():
        pair = solve_gne(g)
        dev = leaving_arc_deviation(pair, ss)
        rows.append([name, dev, pair.epsilon, float(pair.x[-1, 0])])
        ax.plot(np.arange(args.N + 1), pair.x[:, 0], label=name)
        print(f"{name:18s} leaving-arc deviation={dev:.3e} x_N={pair.x[-1, 0]:+.4f}")
    ax.axhline(ss.x_s[0], color="grey", lw=0.8, ls="--")
    ax.set_xlabel("k")
    ax.set_ylabel("x_k")
    ax.legend()
    save(fig, out / "terminal_penalty_profiles.png")
    write_csv(out / "terminal_variants.csv", ["variant", "leaving_arc_deviation", "epsilon", "x_N"], rows)


if __name__ == "__main__":
    main()
