"""Numeric ranks of LoRA and Dual updates across seeds, plus summary medians.

    python scripts/rank_figure.py [--d 128] [--seeds 20] [--when init|final]
"""

import argparse
import statistics

from dualora import experiments
from dualora.config import RunConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=128)
    ap.add_argument("--r1", type=int, default=8)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--when", choices=("init", "final"), default="init")
    args = ap.parse_args()
    seeds = tuple(range(args.seeds))
    dual = RunConfig(d=args.d, k=args.d, r1=args.r1, r2=args.r1, seeds=seeds, when=args.when)
    lora = dual.replace(adapter="lora", r=2 * args.r1)

    for name, cfg in (("lora", lora), ("dual", dual)):
        rep = experiments.rank_study(cfg)
        print(f"# {name}")
        print(rep.to_csv(), end="")
        cols = ("rank_BA", "rank_relu_BA", "rank_sign_DC", "rank_delta")
        meds = {c: statistics.median(getattr(r, c) for r in rep.rows) for c in cols}
        print("# median " + " ".join(f"{c}={v:g}" for c, v in meds.items()))


if __name__ == "__main__":
    main()
