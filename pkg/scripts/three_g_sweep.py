"""3G constant refinement sweep over domains and stability indices.

For each (domain, alpha) the same 10^4 well-separated triples are scored on the
coarse and fine grids and the relative change of the sup constant is printed.

    python3 scripts/three_g_sweep.py --cells 64
"""
import argparse

from stablegauge.checks import REGISTRY, Context
from stablegauge.cli import DEFAULT_CONFIG
from stablegauge.config import parse_config

DOMAINS = {
    "ball": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
    "box": {"shape": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
    "lshape": {"shape": "polygon", "vertices": [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]},
}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--domains", nargs="+", default=["ball", "box"], choices=sorted(DOMAINS))
    p.add_argument("--alphas", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    print("domain,alpha,sup_2h,sup_h,relative_change,status")
    for name in args.domains:
        for alpha in args.alphas:
            cfg = parse_config({**DEFAULT_CONFIG, "domain": DOMAINS[name], "alpha": alpha,
                                "grid": {"cells": args.cells}, "seed": args.seed}, list(REGISTRY))
            out = REGISTRY["three_g"].run(Context(cfg))
            m = out.metrics
            print(f"{name},{alpha},{m['sup_2h']:.6f},{m['sup_h']:.6f},{m['relative_change']:.4%},{out.status}",
                  flush=True)


if __name__ == "__main__":
    main()
