import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualora.adapters import DualAdapter, forward_node, init_dual
from dualora.autodiff import Tape, clip, numeric_gradient, relu_backward, sign_backward_ste
from dualora.matrix import RngStream, gaussian


def test_relu_backward_strict_mask():
    g = np.ones((1, 3))
    assert relu_backward(g, np.array([[-1.0, 0.0, 2.0]])).tolist() == [[0.0, 0.0, 1.0]]


def test_sign_backward_ste_clips():
    out = sign_backward_ste(np.array([[-4.0, 0.5]]), np.zeros((1, 2)))
    assert out.tolist() == [[-1.0, 0.5]]


def test_matmul_and_sum_gradients():
    tape = Tape()
    a = tape.param("a", np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = tape.param("b", np.array([[5.0], [6.0]]))
    grads = tape.backward(tape.sum(tape.matmul(a, b)))
    assert grads["a"].tolist() == [[5.0, 6.0], [5.0, 6.0]]
    assert grads["b"].tolist() == [[4.0], [6.0]]


def test_mse_gradient():
    tape = Tape()
    p = tape.param("p", np.array([[1.0, 3.0]]))
    grads = tape.backward(tape.mse(p, tape.const(np.array([[0.0, 0.0]]))))
    assert grads["p"].tolist() == [[1.0, 3.0]]


def test_accumulation_doubles():
    tape = Tape()
    x = tape.param("x", np.array([[2.0, -1.0]]))
    loss = tape.sum(tape.hadamard(x, x))
    once = tape.backward(loss)["x"]
    twice = tape.backward(loss)["x"]
    assert np.array_equal(twice, 2 * once)
    tape.zero_grad()
    assert np.array_equal(tape.backward(loss)["x"], once)


def test_reused_node_sums_paths():
    tape = Tape()
    x = tape.param("x", np.array([[3.0]]))
    y = tape.add(x, x)
    assert tape.backward(tape.sum(y))["x"].tolist() == [[2.0]]


def test_backward_errors():
    with pytest.raises(RuntimeError):
        Tape().backward(Tape().const(np.ones((1, 1))))
    t1, t2 = Tape(), Tape()
    t1.const(np.ones((1, 1)))
    foreign = t2.const(np.ones((1, 1)))
    with pytest.raises(RuntimeError):
        t1.backward(foreign)
    tape = Tape()
    big = tape.param("p", np.ones((2, 2)))
    with pytest.raises(ValueError, match="1x1"):
        tape.backward(big)


def test_duplicate_param_rejected():
    tape = Tape()
    tape.param("A", np.ones((1, 1)))
    with pytest.raises(ValueError):
        tape.param("A", np.ones((1, 1)))


def test_foreign_operand_rejected():
    other = Tape().const(np.ones((1, 1)))
    with pytest.raises(ValueError, match="not recorded"):
        Tape().relu(other)


def test_shape_checks():
    tape = Tape()
    a = tape.const(np.ones((2, 3)))
    with pytest.raises(ValueError):
        tape.matmul(a, a)
    with pytest.raises(ValueError):
        tape.hadamard(a, tape.const(np.ones((3, 2))))


@given(st.integers(0, 2**32 - 1))
def test_elementwise_ops_match_fd(seed):
    rng = RngStream(seed)
    x0 = gaussian(3, 3, 1.0, rng)
    w = gaussian(3, 3, 1.0, rng)
    x0 = np.where(np.abs(x0) < 1e-3, 0.5, x0)
    for op in ("abs", "sigmoid", "relu"):
        def build(t, xv):
            node = getattr(t, op)(t.param("x", xv))
            return t.sum(t.hadamard(node, t.const(w)))
        tape = Tape()
        grad = tape.backward(build(tape, x0))["x"]
        fd = numeric_gradient(lambda: float(build(Tape(), x0).value[0, 0]), x0)
        assert np.allclose(grad, fd, rtol=1e-6, atol=1e-8), op


def test_direction_path_closed_form_2x2():
    """Hand-built 2x2 case: gD = clip(s * G * R) @ C.T and gC = D.T @ clip(s * G * R)."""
    W0 = np.zeros((2, 2))
    A = np.eye(2)
    B = np.array([[2.0, -1.0], [1.0, 1.0]])
    C = np.eye(2)
    D = np.array([[1.0, -1.0], [2.0, 0.5]])
    a = DualAdapter(W0=W0, A=A, B=B, C=C, D=D, alpha=4.0, r1=2, r2=2,
                    warmup_steps=0, step_counter=1)
    G = np.array([[0.5, 3.0], [-0.4, 0.2]])
    tape = Tape()
    loss = tape.sum(tape.hadamard(a.delta_node(tape), tape.const(G)))
    grads = tape.backward(loss)

    s = a.scale
    assert s == 2.0
    R = np.maximum(B @ A, 0.0)
    Q = clip(s * G * R)
    assert np.array_equal(grads["C"], D.T @ Q)
    assert np.array_equal(grads["D"], Q @ C.T)
    # the same numbers worked out by hand
    assert grads["D"].tolist() == [[1.0, 0.0], [-0.8, 0.4]]
    assert np.allclose(grads["C"], [[-0.6, 0.8], [-1.4, 0.2]], rtol=0, atol=1e-15)


def test_direction_path_input_gate_2x2():
    a = DualAdapter(W0=np.zeros((2, 2)), A=np.eye(2), B=np.ones((2, 2)), C=np.eye(2),
                    D=np.array([[3.0, 0.0], [0.0, -0.5]]), alpha=2.0, r1=2, r2=2,
                    warmup_steps=0, step_counter=1, ste_gate_on_input=True)
    tape = Tape()
    loss = tape.sum(a.delta_node(tape))
    g = tape.backward(loss)
    # R = 2 everywhere, s = 1; |DC| > 1 only at (0, 0)
    assert g["D"].tolist() == [[0.0, 1.0], [1.0, 1.0]]


def test_corrupt_hook_changes_gradients():
    a = init_dual(5, 5, 2, 2, std=0.5, warmup_steps=0, rng=RngStream(3))
    a.step_counter = 1
    x = gaussian(5, 4, 1.0, RngStream(4))
    y = gaussian(5, 4, 1.0, RngStream(5))
    out = []
    for corrupt in (False, True):
        tape = Tape(corrupt_relu_backward=corrupt)
        loss = tape.mse(forward_node(tape, a, x), tape.const(y))
        out.append(tape.backward(loss)["A"])
    assert not np.allclose(out[0], out[1])


def test_numeric_gradient_restores_input():
    x = np.array([[1.0, 2.0]])
    g = numeric_gradient(lambda: float(np.sum(x**2)), x)
    assert x.tolist() == [[1.0, 2.0]]
    assert np.allclose(g, [[2.0, 4.0]])
