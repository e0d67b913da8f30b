"""Ablation table (variants, magnitude activations, sign schemes) as Markdown.

    python scripts/ablation_table.py [--config scripts/configs/teacher.cfg] [--steps N]

Set DUALORA_THREADS to spread the runs over worker processes.
"""

import argparse

from dualora import experiments
from dualora.config import load_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--steps")
    args = ap.parse_args()
    overrides = {"steps": args.steps} if args.steps else {}
    cfg = load_config(args.config, overrides)
    rows = experiments.ablate(cfg)
    print("| group | setting | r1 | r2 | params | median final MSE | min | max |")
    print("|---|---|---|---|---|---|---|---|")
    for r in rows:
        print(f"| {r['group']} | {r['name']} | {r['r1']} | {r['r2']} | {r['param_count']} "
              f"| {r['median_final_mse']:.4g} | {r['min_final_mse']:.4g} | {r['max_final_mse']:.4g} |")


if __name__ == "__main__":
    main()
