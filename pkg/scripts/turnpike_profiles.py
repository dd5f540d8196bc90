"""State trajectories over several horizons and initial states, with the eps-ball around x_s."""

from pathlib import Path

import numpy as np

from _common import parser, plt, save, write_csv
from lqgne import load_game, solve_gne, solve_steady_state
from lqgne.turnpike import measure_turnpike


def main():
    p = parser(__doc__, "out/turnpike")
    p.add_argument("--horizons", default="10,20,40,60")
    p.add_argument("--x0", default="-1,0,1")
    p.add_argument("--eps", type=float, default=0.05)
    args = p.parse_args()
    game = load_game(args.game)
    ss = solve_steady_state(game)
    horizons = [int(n) for n in args.horizons.split(",")]
    x0s = [float(x) for x in args.x0.split(",")]
    out = Path(args.out)

    rows = []
    fig, axes = plt.subplots(1, len(x0s), figsize=(4 * len(x0s), 3.2), sharey=True)
    for ax, x0 in zip(np.atleast_1d(axes), x0s):
        for N in horizons:
            pair = solve_gne(game.replace(N=N, x0=[x0]))
            rep = measure_turnpike(pair, ss, args.eps)
            rows.append([N, x0, rep.q_eps, rep.outside_count, rep.entry_index, rep.leaving_index,
                         pair.epsilon])
            ax.plot(np.arange(N + 1), pair.x[:, 0], label=f"N={N}")
        ax.axhspan(ss.x_s[0] - args.eps, ss.x_s[0] + args.eps, color="grey", alpha=0.2)
        ax.set_title(f"x0={x0:g}")
        ax.set_xlabel("k")
    np.atleast_1d(axes)[0].set_ylabel("x_k")
    np.atleast_1d(axes)[0].legend()
    save(fig, out / "turnpike_profiles.png")
    write_csv(out / "turnpike_counts.csv",
              ["N", "x0", "q_eps", "outside_count", "entry_index", "leaving_index", "epsilon"], rows)
    print(f"x_s = {ss.x_s[0]:.6f}")
    for r in rows:
        print("N={:3d} x0={:+.1f} outside={:2d} entry={} leaving={}".format(r[0], r[1], r[3], r[4], r[5]))


if __name__ == "__main__":
    main()
