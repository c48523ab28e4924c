"""Monte Carlo survival-decay slope on the unit ball for several seeds and time steps.

Compares the fitted slope of log P(tau > t) with mu0 from the 64x64 eigensolve.

    python3 scripts/survival_slope_seeds.py --seeds 1 2 3 --dt 0.002 --paths 1000000
"""
import argparse

import numpy as np

from stablegauge import spectral as sp
from stablegauge import stable_mc as mc
from stablegauge.geometry import Ball


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--dt", type=float, nargs="+", default=[2e-3])
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--t-max", type=float, default=3.0)
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--threads", type=int)
    args = p.parse_args()
    ball = Ball()
    mu0 = sp.eigensolve(sp.assemble(ball, sp.grid_spacing(ball, args.cells), args.alpha), 1).lambda0
    print(f"mu0 ({args.cells} cells) = {mu0:.6f}")
    print("seed,dt,slope,stderr,relative_gap")
    for dt in args.dt:
        for seed in args.seeds:
            s = mc.killed_walk_batch(ball, args.alpha, np.zeros(2), dt, args.t_max, args.paths,
                                     mc.RngStream(seed, 0), threads=args.threads)
            fit = sp.fit_survival_decay(s)
            print(f"{seed},{dt},{fit.rate:.5f},{fit.stderr:.5f},{abs(fit.rate - mu0) / abs(mu0):.4%}", flush=True)


if __name__ == "__main__":
    main()
