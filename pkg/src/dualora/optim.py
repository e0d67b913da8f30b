"""Plain gradient descent and bias-corrected Adam over named matrices.

Both rules descend: ``param <- param - lr * update``. Only names handed to
:meth:`Optimizer.step` get state, so frozen weights never enter it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from dualora.matrix import Matrix

ADAM_EPS = 1e-8


class OptimizerKind(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


def _check(param: Matrix, grad: Matrix) -> None:
    if param.shape != grad.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameter shape {param.shape}")


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = ADAM_EPS
    m: dict[str, Matrix] = field(default_factory=dict)
    v: dict[str, Matrix] = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.kind is OptimizerKind.ADAM and not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")


def sgd_step(param: Matrix, grad: Matrix, state: OptimizerState) -> Matrix:
    _check(param, grad)
    return param - state.lr * grad


def adam_step(param: Matrix, grad: Matrix, state: OptimizerState, name: str = "param") -> Matrix:
    """One Adam update for ``name`` at the state's current timestep.

    The caller advances ``state.t`` once per step before updating any
    parameter; :class:`Optimizer` does this. Called on its own with
    ``state.t == 0`` this function treats the call as timestep 1.
    """
    _check(param, grad)
    t = max(state.t, 1)
    m = state.m.get(name)
    if m is None:
        m = np.zeros_like(param)
        state.v[name] = np.zeros_like(param)
    v = state.v[name]
    m = state.beta1 * m + (1.0 - state.beta1) * grad
    v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
    state.m[name], state.v[name] = m, v
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Optimizer:
    def __init__(self, state: OptimizerState):
        self.state = state

    @classmethod
    def create(cls, kind: str = "adam", lr: float = 1e-2, beta1: float = 0.9,
               beta2: float = 0.999) -> "Optimizer":
        return cls(OptimizerState(kind=kind, lr=lr, beta1=beta1, beta2=beta2))

    def step(self, params: dict[str, Matrix], grads: dict[str, Matrix]) -> dict[str, Matrix]:
        """Return updated copies of ``params``; inputs are left untouched."""
        missing = set(params) - set(grads)
        if missing:
            raise KeyError(f"no gradient for parameters {sorted(missing)}")
        self.state.t += 1
        if self.state.kind is OptimizerKind.SGD:
            return {n: sgd_step(p, grads[n], self.state) for n, p in params.items()}
        return {n: adam_step(p, grads[n], self.state, n) for n, p in params.items()}
