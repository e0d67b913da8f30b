"""Define-by-run reverse-mode differentiation over float64 matrices.

Each training step builds a fresh :class:`Tape`. Nodes are appended in
execution order, so the node list is already topologically sorted and
``backward`` simply walks it in reverse.

Only the operations the adapters need are provided. Three of them carry
custom backward rules rather than true derivatives:

* ``relu`` uses the strict mask ``input > 0`` (subgradient 0 at the kink),
* ``sign`` uses a straight-through surrogate chosen by :class:`SignScheme`,
* ``scale`` treats its factor as a constant (used for the warm-up ramp).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dualora import binarize
from dualora.binarize import SignScheme, clip
from dualora.matrix import Matrix, sigmoid_act

__all__ = ["Node", "Tape", "clip", "relu_backward", "sign_backward_ste"]

LEAF_OPS = ("param", "const")


def relu_backward(upstream: Matrix, saved_input: Matrix) -> Matrix:
    if upstream.shape != saved_input.shape:
        raise ValueError(
            f"relu_backward: shape mismatch {upstream.shape} vs {saved_input.shape}"
        )
    return np.where(saved_input > 0, upstream, 0.0)


def sign_backward_ste(upstream: Matrix, saved_input: Matrix) -> Matrix:
    if upstream.shape != saved_input.shape:
        raise ValueError(
            f"sign_backward_ste: shape mismatch {upstream.shape} vs {saved_input.shape}"
        )
    return clip(upstream, -1.0, 1.0)


@dataclass(eq=False)
class Node:
    op: str
    value: Matrix
    parents: tuple["Node", ...] = ()
    saved: dict = field(default_factory=dict)
    requires_grad: bool = False
    name: str | None = None
    grad: Matrix | None = None
    index: int = -1

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Tape:
    """Records operations on :class:`Node` values and differentiates them.

    ``corrupt_relu_backward`` is a test hook: it drops the ReLU mask in the
    backward pass so gradient checks have a negative control.
    """

    def __init__(self, corrupt_relu_backward: bool = False):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}
        self.corrupt_relu_backward = corrupt_relu_backward

    # -- leaves ---------------------------------------------------------

    def _push(self, node: Node) -> Node:
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def param(self, name: str, value: Matrix) -> Node:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered on this tape")
        node = Node("param", np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        node.grad = np.zeros_like(node.value)
        self.params[name] = node
        return self._push(node)

    def const(self, value: Matrix) -> Node:
        return self._push(Node("const", np.asarray(value, dtype=np.float64)))

    def _op(self, op: str, value: Matrix, parents: tuple[Node, ...], **saved) -> Node:
        for p in parents:
            if p.index < 0 or p.index >= len(self.nodes) or self.nodes[p.index] is not p:
                raise ValueError(f"{op}: operand is not recorded on this tape")
        rg = any(p.requires_grad for p in parents)
        return self._push(Node(op, value, parents, saved, requires_grad=rg))

    # -- operations -----------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        return self._op("matmul", a.value @ b.value, (a, b))

    def hadamard(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ValueError(f"hadamard: shape mismatch {a.shape} vs {b.shape}")
        return self._op("hadamard", a.value * b.value, (a, b))

    def add(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
        return self._op("add", a.value + b.value, (a, b))

    def scale(self, a: Node, factor: float) -> Node:
        return self._op("scale", float(factor) * a.value, (a,), factor=float(factor))

    def relu(self, a: Node) -> Node:
        return self._op("relu", np.where(a.value > 0, a.value, 0.0), (a,))

    def abs(self, a: Node) -> Node:
        return self._op("abs", np.abs(a.value), (a,))

    def sigmoid(self, a: Node) -> Node:
        return self._op("sigmoid", sigmoid_act(a.value), (a,))

    def sign(
        self,
        a: Node,
        scheme: SignScheme | str = SignScheme.STE,
        gate_on_input: bool = False,
    ) -> Node:
        scheme = SignScheme.parse(scheme)
        out = binarize.sign_forward(a.value, scheme)
        return self._op(f"sign-{scheme.value}", out, (a,), scheme=scheme, gate=gate_on_input)

    def sum(self, a: Node) -> Node:
        return self._op("sum", np.array([[a.value.sum()]]), (a,))

    def mse(self, pred: Node, target: Node) -> Node:
        """Mean over all entries of ``(pred - target)**2``."""
        if pred.shape != target.shape:
            raise ValueError(f"mse: shape mismatch {pred.shape} vs {target.shape}")
        diff = pred.value - target.value
        return self._op("mse", np.array([[np.mean(diff * diff)]]), (pred, target), diff=diff)

    # -- differentiation ------------------------------------------------

    def _vjp(self, node: Node, g: Matrix) -> tuple[Matrix, ...]:
        op = node.op
        p = node.parents
        if op == "matmul":
            return g @ p[1].value.T, p[0].value.T @ g
        if op == "hadamard":
            return g * p[1].value, g * p[0].value
        if op == "add":
            return g, g
        if op == "scale":
            return (node.saved["factor"] * g,)
        if op == "relu":
            if self.corrupt_relu_backward:
                return (g,)
            return (relu_backward(g, p[0].value),)
        if op == "abs":
            return (g * np.sign(p[0].value),)
        if op == "sigmoid":
            s = node.value
            return (g * s * (1.0 - s),)
        if op.startswith("sign-"):
            return (binarize.sign_backward(g, p[0].value, node.saved["scheme"], node.saved["gate"]),)
        if op == "sum":
            return (np.full(p[0].shape, g[0, 0]),)
        if op == "mse":
            diff = node.saved["diff"]
            gp = (2.0 * g[0, 0] / diff.size) * diff
            return gp, -gp
        raise NotImplementedError(op)

    def backward(self, loss: Node) -> dict[str, Matrix]:
        """Accumulate d(loss)/d(param) into every registered parameter.

        Parameter buffers are not reset, so calling this twice sums the
        gradients; use :meth:`zero_grad` between steps.
        """
        if not self.nodes:
            raise RuntimeError("backward called before any forward operation")
        if loss.index < 0 or loss.index >= len(self.nodes) or self.nodes[loss.index] is not loss:
            raise RuntimeError("loss node was not produced by this tape")
        if loss.shape != (1, 1):
            raise ValueError(f"loss must be a 1x1 scalar, got shape {loss.shape}")

        for node in self.nodes:
            if node.op != "param":
                node.grad = None
        upstream: dict[int, Matrix] = {loss.index: np.ones((1, 1))}

        for node in reversed(self.nodes[: loss.index + 1]):
            g = upstream.pop(node.index, None)
            if g is None or not node.requires_grad:
                continue
            if node.op == "param":
                node.grad += g
                continue
            if node.op != "const":
                node.grad = g
            for parent, pg in zip(node.parents, self._vjp(node, g)):
                if not parent.requires_grad:
                    continue
                prev = upstream.get(parent.index)
                upstream[parent.index] = pg if prev is None else prev + pg
        return self.grads()

    def grads(self) -> dict[str, Matrix]:
        return {name: node.grad.copy() for name, node in self.params.items()}

    def zero_grad(self) -> None:
        for node in self.params.values():
            node.grad = np.zeros_like(node.value)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``f`` with respect to every entry of ``x``.

    ``x`` is perturbed in place and restored after each probe.
    """
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad
