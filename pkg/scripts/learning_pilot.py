"""Final/initial population MSE on the sparse teacher, with reference points.

Prints one row per seed: the Dual adapter, a LoRA adapter with the same
trainable-parameter count, and the best possible rank-2r update (truncated
SVD of the teacher update), which bounds the LoRA row from below.

    python scripts/learning_pilot.py [--steps 2000] [--seeds 0,1,2,3,4]
"""

import argparse
import statistics

import numpy as np

from dualora import experiments
from dualora.config import RunConfig


def svd_floor(target: np.ndarray, rank: int) -> float:
    s = np.linalg.svd(target, compute_uv=False)
    return float(np.sum(s[rank:] ** 2) / np.sum(s**2))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--sparsity", type=float, default=0.9)
    args = ap.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    dual = RunConfig(steps=args.steps, sparsity=args.sparsity, seeds=seeds)
    lora = dual.replace(adapter="lora", r=dual.r1 + dual.r2)

    rows = []
    print("seed,dual_ratio,lora_ratio,rank_floor")
    for s in seeds:
        teacher = experiments.build_teacher(dual, s)
        init = teacher.population_mse(np.zeros_like(teacher.W0))
        row = (experiments.final_mse((dual, s)) / init, experiments.final_mse((lora, s)) / init,
               svd_floor(teacher.delta, lora.r))
        rows.append(row)
        print(f"{s},{row[0]:.4g},{row[1]:.4g},{row[2]:.4g}")
    med = [statistics.median(col) for col in zip(*rows)]
    print(f"median,{med[0]:.4g},{med[1]:.4g},{med[2]:.4g}")


if __name__ == "__main__":
    main()
