"""Dissipation-inequality slacks, available-storage partial sums and average-cost gaps."""

from pathlib import Path

import numpy as np

from _common import parser, plt, save, write_csv
from lqgne import load_game, solve_gne, solve_steady_state
from lqgne.dissipativity import (StorageCandidate, available_storage, check_optimal_operation,
                                 check_sdi, fit_quadratic_storage, sdi_slacks)


def main():
    p = parser(__doc__, "out/dissipativity")
    args = p.parse_args()
    game = load_game(args.game)
    ss = solve_steady_state(game)
    horizons, x0s = (10, 20, 40, 60), [[-1.0], [0.0], [1.0]]
    pairs = [solve_gne(game.replace(N=N, x0=x0)) for N in horizons for x0 in x0s]
    seeded = StorageCandidate.seeded(ss)
    rep = check_sdi(game, ss, seeded, pairs)
    print("seeded storage:", rep.summary())
    _, best = fit_quadratic_storage(game, ss, pairs)
    print("best of linear + s*I quadratic storages:", best.summary())

    out = Path(args.out)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for x0 in x0s:
        pair = solve_gne(game.replace(N=60, x0=x0))
        slack, _ = sdi_slacks(game, ss, seeded, pair)
        ax.plot(slack, label=f"x0={x0[0]:g}")
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("k")
    ax.set_ylabel("slack")
    ax.legend()
    save(fig, out / "sdi_slacks.png")

    avail = available_storage(game, ss, rep.alpha_coeff, horizons, x0s)
    ops = check_optimal_operation(game, ss, horizons, x0s)
    rows = [[N, a.x0[0], a.partial[j], op.gaps[j]]
            for a, op in zip(avail, ops) for j, N in enumerate(horizons)]
    write_csv(out / "storage_and_gaps.csv", ["N", "x0", "available_storage_partial", "avg_cost_gap"], rows)
    for r in rows:
        print("N={:3d} x0={:+.0f} partial={:+.6f} gap={:.6f}".format(*r))


if __name__ == "__main__":
    main()
