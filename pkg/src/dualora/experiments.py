"""Seeded experiment runners behind the CLI: training, sweeps, ablations, rank studies.

Every run is a pure function of ``(RunConfig, seed)``. Each seed splits into
independent streams for the teacher, the adapter initialization, and the
training batches, so runs can be farmed out to worker processes without
changing any result.
"""

from __future__ import annotations

import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

from dualora.adapters import Adapter, init_dual, init_lora, param_count, past_warmup
from dualora.config import RunConfig
from dualora.gradcheck import GradCheckResult, check_gradients, make_instance
from dualora.matrix import RngStream, gaussian
from dualora.optim import Optimizer
from dualora.rank import RankReport, rank_report
from dualora.tasks import RunRecord, Teacher, TeacherSpec, gen_teacher, train

ADAPTER_STREAM = 101
DATA_STREAM = 202

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("DUALORA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_jobs(fn: Callable[[T], R], jobs: Iterable[T]) -> list[R]:
    """Ordered map, fanned out to ``DUALORA_THREADS`` worker processes."""
    jobs = list(jobs)
    n = min(worker_count(), len(jobs))
    if n <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def build_teacher(cfg: RunConfig, seed: int) -> Teacher:
    return gen_teacher(TeacherSpec(d=cfg.d, k=cfg.k, sparsity=cfg.sparsity,
                                   magnitude_std=cfg.magnitude_std, noise_std=cfg.noise_std,
                                   seed=seed))


def build_adapter(cfg: RunConfig, seed: int, W0=None, zero_b: bool = True) -> Adapter:
    rng = RngStream(seed).spawn(ADAPTER_STREAM)
    if cfg.adapter == "lora":
        return init_lora(cfg.d, cfg.k, cfg.r, alpha=cfg.resolved_alpha, std=cfg.init_std,
                         rng=rng, W0=W0, zero_b=zero_b)
    return init_dual(cfg.d, cfg.k, cfg.r1, cfg.r2, alpha=cfg.resolved_alpha, std=cfg.init_std,
                     warmup_steps=cfg.warmup_steps, rng=rng, W0=W0, variant=cfg.variant,
                     sign_scheme=cfg.sign_scheme, magnitude_activation=cfg.magnitude_activation,
                     ste_gate_on_input=cfg.ste_gate_on_input)


def build_optimizer(cfg: RunConfig) -> Optimizer:
    return Optimizer.create(cfg.optimizer, cfg.lr, cfg.beta1, cfg.beta2)


def data_stream(seed: int) -> RngStream:
    return RngStream(seed).spawn(DATA_STREAM)


@dataclass
class TrainResult:
    adapter: Adapter
    optimizer: Optimizer
    teacher: Teacher
    record: RunRecord


def run_training(cfg: RunConfig, seed: int, adapter: Adapter | None = None,
                 optimizer: Optimizer | None = None) -> TrainResult:
    teacher = build_teacher(cfg, seed)
    if adapter is None:
        adapter = build_adapter(cfg, seed, W0=teacher.W0)
    optimizer = optimizer or build_optimizer(cfg)
    record = train(adapter, teacher, optimizer, cfg.steps, cfg.batch_size, data_stream(seed),
                   corrupt_relu_backward=cfg.debug_corrupt_backward)
    return TrainResult(adapter, optimizer, teacher, record)


def final_mse(job: tuple[RunConfig, int]) -> float:
    cfg, seed = job
    return run_training(cfg, seed).record.final_mse


def _summary(values: list[float]) -> dict[str, float]:
    return {
        "median_final_mse": statistics.median(values),
        "mean_final_mse": statistics.fmean(values),
        "min_final_mse": min(values),
        "max_final_mse": max(values),
    }


def multi_seed(configs: list[RunConfig], seeds: tuple[int, ...]) -> list[list[float]]:
    jobs = [(c, s) for c in configs for s in seeds]
    flat = map_jobs(final_mse, jobs)
    n = len(seeds)
    return [flat[i * n:(i + 1) * n] for i in range(len(configs))]


# -- sweep ---------------------------------------------------------------

SWEEP_COLUMNS = ("r1", "r2", "param_count", "n_seeds", "median_final_mse", "mean_final_mse",
                 "min_final_mse", "max_final_mse")


def sweep_r1_values(cfg: RunConfig) -> tuple[int, ...]:
    total = cfg.r1 + cfg.r2
    values = cfg.r1_values or tuple(range(2, total - 1, 2))
    for r1 in values:
        if not 1 <= r1 <= total - 1:
            raise ValueError(f"r1_values: {r1} is outside [1, {total - 1}] for r1 + r2 = {total}")
        if max(r1, total - r1) > min(cfg.d, cfg.k):
            raise ValueError(f"r1_values: ranks ({r1}, {total - r1}) exceed min(d, k)")
    return values


def sweep(cfg: RunConfig) -> list[dict]:
    """Train at every ``r1`` with ``r2 = (r1 + r2 of cfg) - r1``; parameter count stays fixed."""
    total = cfg.r1 + cfg.r2
    values = sweep_r1_values(cfg)
    configs = [cfg.replace(adapter="dual", r1=r1, r2=total - r1) for r1 in values]
    results = multi_seed(configs, cfg.seeds)
    rows = []
    for c, losses in zip(configs, results):
        rows.append({"r1": c.r1, "r2": c.r2,
                     "param_count": param_count("dual", c.d, c.k, r1=c.r1, r2=c.r2),
                     "n_seeds": len(losses), **_summary(losses)})
    if len({row["param_count"] for row in rows}) != 1:
        raise AssertionError("sweep rows do not share one parameter count")
    return rows


# -- ablation ------------------------------------------------------------

ABLATE_COLUMNS = ("group", "name", "variant", "magnitude_activation", "sign_scheme", "r1", "r2",
                  "scale", "param_count", "n_seeds", "median_final_mse", "mean_final_mse",
                  "min_final_mse", "max_final_mse", "final_mse_by_seed")


def ablation_configs(cfg: RunConfig) -> list[tuple[str, str, RunConfig]]:
    """(group, name, config) rows at a common alpha and matched trainable-parameter count.

    The fixed-binary setting has no direction factors, so it gets
    ``r1 + r2`` magnitude rank to keep the count equal.
    """
    base = cfg.replace(adapter="dual", variant="full", magnitude_activation="relu",
                       sign_scheme="ste", alpha=cfg.resolved_alpha)
    rows = []
    for variant in ("full", "no_relu", "no_sign", "fixed_binary"):
        c = base.replace(variant=variant)
        if variant == "fixed_binary":
            c = c.replace(r1=cfg.r1 + cfg.r2)
        rows.append(("variant", variant, c))
    for act in ("relu", "abs", "sigmoid"):
        rows.append(("activation", act, base.replace(magnitude_activation=act)))
    for scheme in ("ste", "xnor", "dorefa"):
        rows.append(("sign_scheme", scheme, base.replace(sign_scheme=scheme)))
    return rows


def ablate(cfg: RunConfig) -> list[dict]:
    table = ablation_configs(cfg)
    unique: list[RunConfig] = []
    for _, _, c in table:
        if c not in unique:
            unique.append(c)
    results = multi_seed(unique, cfg.seeds)
    rows = []
    for group, name, c in table:
        losses = results[unique.index(c)]
        kind = "fixed_binary" if c.variant == "fixed_binary" else "dual"
        r2 = 0 if kind == "fixed_binary" else c.r2
        scale = c.alpha / c.r1 if kind == "fixed_binary" else c.alpha / (c.r1 * c.r2) ** 0.5
        rows.append({
            "group": group, "name": name, "variant": c.variant,
            "magnitude_activation": c.magnitude_activation, "sign_scheme": c.sign_scheme,
            "r1": c.r1, "r2": r2, "scale": scale,
            "param_count": param_count(kind, c.d, c.k, r1=c.r1, r2=c.r2),
            "n_seeds": len(losses), **_summary(losses),
            "final_mse_by_seed": ";".join(repr(v) for v in losses),
        })
    return rows


# -- rank ----------------------------------------------------------------

def _rank_job(job: tuple[RunConfig, int]) -> tuple[str, Adapter]:
    cfg, seed = job
    if cfg.when == "final":
        adapter = run_training(cfg, seed).adapter
    else:
        # LoRA's zero B would make every init-time rank 0, so both factors are drawn
        adapter = build_adapter(cfg, seed, zero_b=False)
        if cfg.adapter == "dual":
            adapter = past_warmup(adapter)
    return f"seed{seed}", adapter


def rank_study(cfg: RunConfig) -> RankReport:
    pairs = map_jobs(_rank_job, [(cfg, s) for s in cfg.seeds])
    return rank_report(pairs, cfg.rel_tol)


# -- gradient check ------------------------------------------------------

def grad_check(cfg: RunConfig) -> GradCheckResult:
    """Finite-difference check on a small seeded instance (``check_*`` keys)."""
    d, k = cfg.check_d, cfg.check_k
    if cfg.adapter == "lora":
        rng = RngStream(cfg.seed)
        adapter = init_lora(d, k, min(cfg.r, d, k), std=cfg.check_std, rng=rng, zero_b=False)
        x = gaussian(k, 5, 1.0, rng)
        y = gaussian(d, 5, 1.0, rng)
        return check_gradients(adapter, x, y, corrupt_relu_backward=cfg.debug_corrupt_backward)
    adapter, x, y = make_instance(d, k, cfg.check_r1, cfg.check_r2, seed=cfg.seed,
                                  std=cfg.check_std, variant=cfg.variant,
                                  sign_scheme=cfg.sign_scheme,
                                  magnitude_activation=cfg.magnitude_activation,
                                  ste_gate_on_input=cfg.ste_gate_on_input)
    return check_gradients(adapter, x, y, corrupt_relu_backward=cfg.debug_corrupt_backward)
