"""Teacher-student regression problems and the training loop.

The teacher perturbs a frozen Gaussian weight by ``M * S`` where ``M`` is a
sparse non-negative magnitude matrix and ``S`` a random sign pattern, the same
magnitude-times-direction shape the Dual adapter produces. Inputs are
standard normal, so the expected squared error of an update ``dW`` is
``||dW - dW*||_F**2 / d + noise_std**2`` and can be computed exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from dualora.adapters import Adapter, DualAdapter, forward_node
from dualora.autodiff import Tape
from dualora.matrix import Matrix, RngStream, gaussian, random_signs
from dualora.optim import Optimizer

_W0_KEY, _MAG_KEY, _MASK_KEY, _SIGN_KEY = 1, 2, 3, 4


class NumericalError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TeacherSpec:
    d: int = 32
    k: int = 32
    sparsity: float = 0.9
    magnitude_std: float = 0.1
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError(f"sparsity must lie in [0, 1], got {self.sparsity}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")


@dataclass(frozen=True)
class Batch:
    x: Matrix
    y: Matrix


@dataclass
class Teacher:
    spec: TeacherSpec
    W0: Matrix
    magnitude: Matrix
    signs: Matrix

    @property
    def delta(self) -> Matrix:
        return self.magnitude * self.signs

    def batch(self, rng: RngStream, batch_size: int) -> Batch:
        d, k = self.W0.shape
        x = rng.normal(k * batch_size).reshape(k, batch_size)
        y = (self.W0 + self.delta) @ x
        if self.spec.noise_std > 0:
            y = y + gaussian(d, batch_size, self.spec.noise_std, rng)
        return Batch(x, y)

    def population_mse(self, delta: Matrix) -> float:
        err = delta - self.delta
        return float(np.sum(err * err) / self.W0.shape[0] + self.spec.noise_std**2)


def gen_teacher(spec: TeacherSpec) -> Teacher:
    root = RngStream(spec.seed)
    W0 = gaussian(spec.d, spec.k, 1.0 / math.sqrt(spec.k), root.spawn(_W0_KEY))
    raw = np.abs(gaussian(spec.d, spec.k, spec.magnitude_std, root.spawn(_MAG_KEY)))
    keep = root.spawn(_MASK_KEY).uniform(spec.d * spec.k).reshape(spec.d, spec.k) > spec.sparsity
    magnitude = np.where(keep, raw, 0.0)
    signs = random_signs(spec.d, spec.k, root.spawn(_SIGN_KEY))
    return Teacher(spec, W0, magnitude, signs)


def mse_loss(tape: Tape, pred, target):
    """Mean squared error node; ``pred``/``target`` may be nodes or raw matrices."""
    if not hasattr(pred, "value"):
        pred = tape.const(pred)
    if not hasattr(target, "value"):
        target = tape.const(target)
    return tape.mse(pred, target)


@dataclass
class RunRecord:
    losses: list[float] = field(default_factory=list)
    delta_norms: list[float] = field(default_factory=list)
    magnitude_zero_fraction: list[float] = field(default_factory=list)
    initial_mse: float = float("nan")
    final_mse: float = float("nan")
    final_delta: Matrix | None = None
    wall_clock: float = 0.0

    def loss_csv(self, start_step: int = 0) -> str:
        lines = ["step,loss"]
        lines += [f"{start_step + i},{loss!r}" for i, loss in enumerate(self.losses)]
        return "\n".join(lines) + "\n"

    def trace_csv(self, start_step: int = 0) -> str:
        lines = ["step,delta_fro,magnitude_zero_fraction"]
        lines += [f"{start_step + i},{n!r},{z!r}" for i, (n, z) in
                  enumerate(zip(self.delta_norms, self.magnitude_zero_fraction))]
        return "\n".join(lines) + "\n"


def train(adapter: Adapter, teacher: Teacher, optimizer: Optimizer, steps: int,
          batch_size: int = 32, rng: RngStream | None = None,
          corrupt_relu_backward: bool = False) -> RunRecord:
    """Train the adapter's trainable factors in place; W0 and W_b stay frozen.

    Step ``t`` draws its batch from ``rng.spawn(t)`` using the adapter's global
    step counter, so a run resumed from a checkpoint sees the same batches an
    uninterrupted run would.
    """
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    if adapter.shape != teacher.W0.shape:
        raise ValueError(f"adapter shape {adapter.shape} does not match teacher {teacher.W0.shape}")
    rng = rng if rng is not None else RngStream(0)
    is_dual = isinstance(adapter, DualAdapter)
    start = adapter.step_counter if is_dual else 0
    rec = RunRecord(initial_mse=teacher.population_mse(adapter.delta()))
    t0 = time.perf_counter()
    for t in range(start, start + steps):
        if is_dual:
            adapter.step_counter = t
        batch = teacher.batch(rng.spawn(t), batch_size)
        tape = Tape(corrupt_relu_backward=corrupt_relu_backward)
        delta = adapter.delta_node(tape)
        pred = forward_node(tape, adapter, batch.x, delta)
        loss = tape.mse(pred, tape.const(batch.y))
        value = float(loss.value[0, 0])
        if not math.isfinite(value):
            raise NumericalError(t, value)
        grads = tape.backward(loss)
        rec.losses.append(value)
        rec.delta_norms.append(float(np.linalg.norm(delta.value)))
        ba = adapter.B @ adapter.A
        rec.magnitude_zero_fraction.append(float(np.mean(ba <= 0)))
        adapter.set_params(optimizer.step(adapter.params(), grads))
    if is_dual:
        adapter.step_counter = start + steps
    rec.wall_clock = time.perf_counter() - t0
    rec.final_delta = adapter.delta()
    rec.final_mse = teacher.population_mse(rec.final_delta)
    return rec
