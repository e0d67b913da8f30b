"""Magnitude/direction rank split at a fixed parameter budget.

    python scripts/ratio_sweep.py [--total 32] [--steps 2000]
"""

import argparse

from dualora import experiments
from dualora.config import RunConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--total", type=int, default=32, help="r1 + r2")
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()
    half = args.total // 2
    cfg = RunConfig(d=args.d, k=args.d, r1=half, r2=args.total - half, steps=args.steps,
                    seeds=tuple(int(s) for s in args.seeds.split(",")))
    rows = experiments.sweep(cfg)
    print("r1,r2,param_count,median_final_mse")
    for r in rows:
        print(f"{r['r1']},{r['r2']},{r['param_count']},{r['median_final_mse']:.5g}")


if __name__ == "__main__":
    main()
