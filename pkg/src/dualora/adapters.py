"""LoRA and Dual LoRA layers on top of a frozen weight.

LoRA adds ``(alpha / r) * B @ A``. Dual LoRA splits the update into a
magnitude group ``act(B @ A)`` (non-negative, ReLU by default) and a
direction group ``sign(D @ C)``, combined with a Hadamard product and scaled
by ``alpha / sqrt(r1 * r2)``. The three ablation variants swap one piece:

* ``no_relu``: ``(B @ A) * sign(D @ C)``
* ``no_sign``: ``relu(B @ A) * (D @ C)``
* ``fixed_binary``: ``(alpha / r1) * relu(B @ A) * W_b`` with a frozen random +/-1 ``W_b``

Every Dual update is multiplied by a linear warm-up ramp, which is 0 at
step 0 so the adapted layer starts out identical to the frozen one even
though all four factors are Gaussian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from dualora import binarize
from dualora.autodiff import Node, Tape
from dualora.binarize import SignScheme
from dualora.matrix import Matrix, RngStream, abs_act, gaussian, random_signs, relu, sigmoid_act

DEFAULT_INIT_STD = 0.02
DEFAULT_WARMUP_STEPS = 100


class Variant(str, enum.Enum):
    FULL = "full"
    NO_RELU = "no_relu"
    NO_SIGN = "no_sign"
    FIXED_BINARY = "fixed_binary"


class Activation(str, enum.Enum):
    RELU = "relu"
    ABS = "abs"
    SIGMOID = "sigmoid"


_ACTIVATIONS = {Activation.RELU: relu, Activation.ABS: abs_act, Activation.SIGMOID: sigmoid_act}


def default_alpha(r1: int, r2: int) -> float:
    """Alpha giving an effective scale of 2, i.e. ``2 * sqrt(r1 * r2)``."""
    return 2.0 * math.sqrt(r1 * r2)


def warmup_scale(step: int, warmup_steps: int) -> float:
    if step < 0 or warmup_steps < 0:
        raise ValueError(f"step and warmup_steps must be non-negative, got {step}, {warmup_steps}")
    if step == 0:
        return 0.0
    if warmup_steps == 0:
        return 1.0
    return min(1.0, step / warmup_steps)


def param_count(kind: str, d: int, k: int, r: int | None = None, r1: int | None = None,
                r2: int | None = None) -> int:
    """Trainable parameter count of one adapted ``d x k`` layer."""
    kind = kind.lower()
    if kind == "lora":
        return r * (d + k)
    if kind == "dual":
        return (r1 + r2) * (d + k)
    if kind == "fixed_binary":
        return r1 * (d + k)
    raise ValueError(f"unknown adapter kind {kind!r}")


def _check_rank(name: str, r: int, d: int, k: int) -> None:
    if not 1 <= r <= min(d, k):
        raise ValueError(f"{name}={r} must lie in [1, min(d, k)={min(d, k)}]")


@dataclass
class LoraAdapter:
    W0: Matrix
    A: Matrix
    B: Matrix
    alpha: float
    r: int

    kind = "lora"

    def __post_init__(self):
        d, k = self.W0.shape
        _check_rank("r", self.r, d, k)
        if self.A.shape != (self.r, k) or self.B.shape != (d, self.r):
            raise ValueError(
                f"LoRA factor shapes A{self.A.shape}, B{self.B.shape} do not conform "
                f"to W0{self.W0.shape} with r={self.r}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.W0.shape

    @property
    def trainable(self) -> tuple[str, ...]:
        return ("A", "B")

    def params(self) -> dict[str, Matrix]:
        return {"A": self.A, "B": self.B}

    def set_params(self, values: dict[str, Matrix]) -> None:
        for name, value in values.items():
            setattr(self, name, value)

    def delta(self) -> Matrix:
        return (self.alpha / self.r) * (self.B @ self.A)

    def delta_node(self, tape: Tape) -> Node:
        A = tape.param("A", self.A)
        B = tape.param("B", self.B)
        return tape.scale(tape.matmul(B, A), self.alpha / self.r)

    def forward(self, x: Matrix) -> Matrix:
        _check_input(self.W0, x)
        return self.W0 @ x + self.delta() @ x


@dataclass
class DualAdapter:
    W0: Matrix
    A: Matrix
    B: Matrix
    C: Matrix | None
    D: Matrix | None
    alpha: float
    r1: int
    r2: int
    sign_scheme: SignScheme = SignScheme.STE
    magnitude_activation: Activation = Activation.RELU
    variant: Variant = Variant.FULL
    W_b: Matrix | None = None
    warmup_steps: int = DEFAULT_WARMUP_STEPS
    step_counter: int = 0
    ste_gate_on_input: bool = False

    kind = "dual"

    def __post_init__(self):
        self.sign_scheme = SignScheme.parse(self.sign_scheme)
        self.magnitude_activation = Activation(self.magnitude_activation)
        self.variant = Variant(self.variant)
        d, k = self.W0.shape
        _check_rank("r1", self.r1, d, k)
        _check_rank("r2", self.r2, d, k)
        if self.A.shape != (self.r1, k) or self.B.shape != (d, self.r1):
            raise ValueError(
                f"magnitude factors A{self.A.shape}, B{self.B.shape} do not conform "
                f"to W0{self.W0.shape} with r1={self.r1}"
            )
        if self.variant is Variant.FIXED_BINARY:
            if self.W_b is None or self.W_b.shape != (d, k):
                raise ValueError("fixed_binary variant needs a d x k binary matrix W_b")
            if not np.all(np.abs(self.W_b) == 1.0):
                raise ValueError("W_b entries must be exactly +1 or -1")
        else:
            if self.W_b is not None:
                raise ValueError(f"W_b is only allowed for the fixed_binary variant, not {self.variant.value}")
            if self.C is None or self.D is None:
                raise ValueError(f"variant {self.variant.value} needs direction factors C and D")
            if self.C.shape != (self.r2, k) or self.D.shape != (d, self.r2):
                raise ValueError(
                    f"direction factors C{self.C.shape}, D{self.D.shape} do not conform "
                    f"to W0{self.W0.shape} with r2={self.r2}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.W0.shape

    @property
    def trainable(self) -> tuple[str, ...]:
        if self.variant is Variant.FIXED_BINARY:
            return ("A", "B")
        return ("A", "B", "C", "D")

    def params(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in self.trainable}

    def set_params(self, values: dict[str, Matrix]) -> None:
        for name, value in values.items():
            if name not in self.trainable:
                raise KeyError(f"{name!r} is not trainable in variant {self.variant.value}")
            setattr(self, name, value)

    @property
    def base_scale(self) -> float:
        if self.variant is Variant.FIXED_BINARY:
            return self.alpha / self.r1
        return self.alpha / math.sqrt(self.r1 * self.r2)

    @property
    def scale(self) -> float:
        """Base scale times the current warm-up factor."""
        return self.base_scale * warmup_scale(self.step_counter, self.warmup_steps)

    # eager pieces, kept in the same operation order as delta_node

    def magnitude(self) -> Matrix:
        ba = self.B @ self.A
        if self.variant is Variant.NO_RELU:
            return ba
        return _ACTIVATIONS[self.magnitude_activation](ba)

    def direction(self) -> Matrix:
        if self.variant is Variant.FIXED_BINARY:
            return self.W_b
        dc = self.D @ self.C
        if self.variant is Variant.NO_SIGN:
            return dc
        return binarize.sign_forward(dc, self.sign_scheme)

    def delta(self) -> Matrix:
        return self.scale * (self.magnitude() * self.direction())

    def delta_node(self, tape: Tape) -> Node:
        A = tape.param("A", self.A)
        B = tape.param("B", self.B)
        mag = tape.matmul(B, A)
        if self.variant is not Variant.NO_RELU:
            act = self.magnitude_activation
            mag = tape.relu(mag) if act is Activation.RELU else (
                tape.abs(mag) if act is Activation.ABS else tape.sigmoid(mag))
        if self.variant is Variant.FIXED_BINARY:
            direction = tape.const(self.W_b)
        else:
            C = tape.param("C", self.C)
            D = tape.param("D", self.D)
            direction = tape.matmul(D, C)
            if self.variant is not Variant.NO_SIGN:
                direction = tape.sign(direction, self.sign_scheme, self.ste_gate_on_input)
        return tape.scale(tape.hadamard(mag, direction), self.scale)

    def forward(self, x: Matrix) -> Matrix:
        _check_input(self.W0, x)
        return self.W0 @ x + self.delta() @ x


Adapter = LoraAdapter | DualAdapter


def _check_input(W0: Matrix, x: Matrix) -> None:
    if x.ndim != 2 or x.shape[0] != W0.shape[1]:
        raise ValueError(f"input of shape {x.shape} does not match weight of shape {W0.shape}")


def lora_delta(a: LoraAdapter) -> Matrix:
    return a.delta()


def dual_delta(a: DualAdapter) -> Matrix:
    return a.delta()


def dual_forward(a: DualAdapter, x: Matrix) -> Matrix:
    return a.forward(x)


def merge(a: Adapter) -> Matrix:
    """Fold the update into the frozen weight for plain ``W' @ x`` inference."""
    return a.W0 + a.delta()


def forward_node(tape: Tape, adapter: Adapter, x: Matrix, delta: Node | None = None) -> Node:
    """Record ``W0 @ x + delta @ x`` on ``tape``; W0 is a constant.

    Pass ``delta`` to reuse an update node already recorded on the tape.
    """
    _check_input(adapter.W0, x)
    if delta is None:
        delta = adapter.delta_node(tape)
    base = tape.const(adapter.W0 @ x)
    upd = tape.matmul(delta, tape.const(x))
    return tape.add(base, upd)


def init_lora(d: int, k: int, r: int, alpha: float | None = None, std: float = DEFAULT_INIT_STD,
              rng: RngStream | None = None, W0: Matrix | None = None,
              zero_b: bool = True) -> LoraAdapter:
    """Gaussian A and zero B, so the initial update is exactly zero.

    ``zero_b=False`` also draws B from the Gaussian, which stands in for a
    trained LoRA layer in rank studies.
    """
    rng = rng if rng is not None else RngStream(0)
    _check_rank("r", r, d, k)
    alpha = float(2 * r if alpha is None else alpha)
    if W0 is None:
        W0 = gaussian(d, k, 1.0 / math.sqrt(k), rng.spawn(1))
    A = gaussian(r, k, std, rng)
    B = np.zeros((d, r)) if zero_b else gaussian(d, r, std, rng)
    return LoraAdapter(W0=W0, A=A, B=B, alpha=alpha, r=r)


def init_dual(d: int, k: int, r1: int, r2: int, alpha: float | None = None,
              std: float = DEFAULT_INIT_STD, warmup_steps: int = DEFAULT_WARMUP_STEPS,
              rng: RngStream | None = None, W0: Matrix | None = None,
              variant: Variant | str = Variant.FULL,
              sign_scheme: SignScheme | str = SignScheme.STE,
              magnitude_activation: Activation | str = Activation.RELU,
              ste_gate_on_input: bool = False) -> DualAdapter:
    """All factors i.i.d. N(0, std**2); the warm-up ramp keeps the update at zero for step 0.

    Draw order from ``rng`` is A, B, C, D, then W_b (fixed_binary only).
    """
    rng = rng if rng is not None else RngStream(0)
    if r1 < 1 or r2 < 1:
        raise ValueError(f"ranks must be positive, got r1={r1}, r2={r2}")
    variant = Variant(variant)
    if not std > 0:
        raise ValueError(f"init std must be positive, got {std}")
    if warmup_steps < 0:
        raise ValueError(f"warmup_steps must be non-negative, got {warmup_steps}")
    alpha = default_alpha(r1, r2) if alpha is None else float(alpha)
    if W0 is None:
        W0 = gaussian(d, k, 1.0 / math.sqrt(k), rng.spawn(1))
    A = gaussian(r1, k, std, rng)
    B = gaussian(d, r1, std, rng)
    C = D = W_b = None
    if variant is Variant.FIXED_BINARY:
        W_b = random_signs(d, k, rng)
    else:
        C = gaussian(r2, k, std, rng)
        D = gaussian(d, r2, std, rng)
    return DualAdapter(W0=W0, A=A, B=B, C=C, D=D, alpha=alpha, r1=r1, r2=r2,
                       sign_scheme=sign_scheme, magnitude_activation=magnitude_activation,
                       variant=variant, W_b=W_b, warmup_steps=warmup_steps,
                       step_counter=0, ste_gate_on_input=ste_gate_on_input)


def past_warmup(a: DualAdapter) -> DualAdapter:
    """Shallow copy with the ramp completed, for inspecting the structural update."""
    return replace(a, step_counter=max(a.warmup_steps, 1))
