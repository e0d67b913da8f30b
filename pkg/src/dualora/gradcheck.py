"""Finite-difference checks of the tape gradients on small seeded instances.

The oracle re-evaluates the loss from the raw factors in extended precision
(``np.longdouble``), sharing no code with the tape. With a 1e-6 step the
float64 rounding noise of a difference quotient is about ``eps * loss / step``,
roughly 1e-9 for unit-scale losses, which would swamp small gradient entries;
extended precision pushes it down by three orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dualora.adapters import (Activation, Adapter, DualAdapter, LoraAdapter, Variant, forward_node,
                              init_dual)
from dualora.autodiff import Tape, numeric_gradient
from dualora.binarize import SignScheme
from dualora.matrix import Matrix, RngStream, gaussian

FD_STEP = 1e-6
REL_TOL = 1e-5
REL_FLOOR = 1e-8
KINK_MARGIN = 1e-3


@dataclass
class GradCheckResult:
    max_rel_error: dict[str, float] = field(default_factory=dict)
    tol: float = REL_TOL
    min_kink_distance: float = float("inf")

    @property
    def passed(self) -> bool:
        return all(err < self.tol for err in self.max_rel_error.values())

    def report(self) -> str:
        lines = [f"{'param':<6} {'max_rel_err':>12}  status"]
        for name, err in self.max_rel_error.items():
            lines.append(f"{name:<6} {err:12.3e}  {'ok' if err < self.tol else 'FAIL'}")
        lines.append(f"min |BA| distance to kink: {self.min_kink_distance:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def differentiable_params(adapter: Adapter) -> tuple[str, ...]:
    """Parameters whose tape gradient is a true derivative.

    Sign nodes use a surrogate, so C and D only qualify when the direction
    group is left linear.
    """
    if isinstance(adapter, DualAdapter) and adapter.variant is not Variant.NO_SIGN:
        return ("A", "B")
    return adapter.trainable


def tape_loss_and_grads(adapter: Adapter, x: Matrix, y: Matrix,
                        corrupt_relu_backward: bool = False) -> tuple[float, dict[str, Matrix]]:
    tape = Tape(corrupt_relu_backward=corrupt_relu_backward)
    loss = tape.mse(forward_node(tape, adapter, x), tape.const(y))
    return float(loss.value[0, 0]), tape.backward(loss)


def _ext(m) -> np.ndarray:
    return np.asarray(m, dtype=np.longdouble)


def oracle_delta(adapter: Adapter) -> np.ndarray:
    """The update matrix recomputed in extended precision."""
    ba = _ext(adapter.B) @ _ext(adapter.A)
    if isinstance(adapter, LoraAdapter):
        return _ext(adapter.alpha) / adapter.r * ba
    if adapter.variant is Variant.NO_RELU:
        mag = ba
    elif adapter.magnitude_activation is Activation.RELU:
        mag = np.where(ba > 0, ba, 0)
    elif adapter.magnitude_activation is Activation.ABS:
        mag = np.abs(ba)
    else:
        mag = 1 / (1 + np.exp(-ba))
    if adapter.variant is Variant.FIXED_BINARY:
        direction = _ext(adapter.W_b)
    else:
        dc = _ext(adapter.D) @ _ext(adapter.C)
        if adapter.variant is Variant.NO_SIGN:
            direction = dc
        else:
            direction = np.where(dc > 0, 1, -1).astype(np.longdouble)
            if adapter.sign_scheme is SignScheme.XNOR:
                direction = direction * np.mean(np.abs(dc), axis=1, keepdims=True)
            elif adapter.sign_scheme is SignScheme.DOREFA:
                direction = direction * np.mean(np.abs(dc))
    return _ext(adapter.scale) * mag * direction


def eager_loss(adapter: Adapter, x: Matrix, y: Matrix) -> np.longdouble:
    """Mean squared error of ``(W0 + delta) @ x`` against ``y``.

    Returned unrounded so the finite difference is also taken in extended
    precision.
    """
    diff = (_ext(adapter.W0) + oracle_delta(adapter)) @ _ext(x) - _ext(y)
    return np.mean(diff * diff)


def kink_distance(adapter: Adapter) -> float:
    if not isinstance(adapter, DualAdapter) or adapter.variant is Variant.NO_RELU \
            or adapter.magnitude_activation is Activation.SIGMOID:
        return float("inf")
    return float(np.min(np.abs(adapter.B @ adapter.A)))


def check_gradients(adapter: Adapter, x: Matrix, y: Matrix, step: float = FD_STEP,
                    tol: float = REL_TOL, corrupt_relu_backward: bool = False) -> GradCheckResult:
    _, grads = tape_loss_and_grads(adapter, x, y, corrupt_relu_backward)
    result = GradCheckResult(tol=tol, min_kink_distance=kink_distance(adapter))
    for name in differentiable_params(adapter):
        fd = numeric_gradient(lambda: eager_loss(adapter, x, y), getattr(adapter, name), step)
        rel = np.abs(grads[name] - fd) / (np.abs(fd) + REL_FLOOR)
        result.max_rel_error[name] = float(rel.max())
    return result


def make_instance(d: int = 6, k: int = 6, r1: int = 2, r2: int = 2, seed: int = 0,
                  std: float = 0.5, n: int = 5, margin: float = KINK_MARGIN,
                  max_tries: int = 1000, **adapter_kwargs) -> tuple[DualAdapter, Matrix, Matrix]:
    """Seeded Dual instance past warm-up, with every BA entry at least ``margin`` from 0.

    Seeds ``seed, seed + 1, ...`` are tried in turn until the margin holds.
    """
    adapter_kwargs.setdefault("warmup_steps", 0)
    for attempt in range(max_tries):
        rng = RngStream(seed + attempt)
        adapter = init_dual(d, k, r1, r2, std=std, rng=rng, **adapter_kwargs)
        adapter.step_counter = max(adapter.warmup_steps, 1)
        if kink_distance(adapter) > margin:
            x = gaussian(k, n, 1.0, rng)
            y = gaussian(d, n, 1.0, rng)
            return adapter, x, y
    raise RuntimeError(f"no instance with kink margin {margin} in {max_tries} seeds")


__all__ = [
    "FD_STEP", "GradCheckResult", "KINK_MARGIN", "REL_TOL", "check_gradients",
    "differentiable_params", "eager_loss", "oracle_delta", "kink_distance", "make_instance", "tape_loss_and_grads",
]
