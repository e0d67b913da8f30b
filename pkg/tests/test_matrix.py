import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualora.matrix import (RngStream, as_matrix, gaussian, hadamard, matmul, random_signs,
                            relu, sigmoid_act)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def mats(shape):
    return arrays(np.float64, shape, elements=finite)


def test_splitmix_reference_value():
    # SplitMix64 reference stream for seed 1234567
    assert int(RngStream(1234567).next_u64(1)[0]) == 6457827717110365317


def test_stream_is_counter_based():
    a = RngStream(3)
    whole = a.next_u64(6)
    b = RngStream(3)
    parts = np.concatenate([b.next_u64(2), b.next_u64(4)])
    assert np.array_equal(whole, parts)


def test_spawn_is_pure_and_distinct():
    root = RngStream(11)
    c1 = root.spawn(1).next_u64(4)
    assert root.counter == 0
    assert np.array_equal(c1, root.spawn(1).next_u64(4))
    assert not np.array_equal(c1, root.spawn(2).next_u64(4))


def test_uniform_range():
    u = RngStream(5).uniform(10000)
    assert u.min() > 0 and u.max() <= 1


def test_normal_box_muller_pairing():
    rng = RngStream(9)
    u1, u2 = RngStream(9).uniform(2)
    z = rng.normal(2)
    r = math.sqrt(-2 * math.log(u1))
    assert z[0] == pytest.approx(r * math.cos(2 * math.pi * u2), abs=1e-15)
    assert z[1] == pytest.approx(r * math.sin(2 * math.pi * u2), abs=1e-15)


def test_gaussian_moments():
    g = gaussian(200, 200, 0.5, RngStream(1))
    # 40000 draws: standard errors are about 0.0025 (mean) and 0.0018 (std)
    assert abs(g.mean()) < 0.01
    assert abs(g.std() - 0.5) < 0.01


def test_gaussian_rejects_bad_std():
    with pytest.raises(ValueError):
        gaussian(2, 2, 0.0, RngStream(0))


def test_random_signs_balanced():
    s = random_signs(100, 100, RngStream(2))
    assert set(np.unique(s)) == {-1.0, 1.0}
    assert abs(s.mean()) < 0.03


def test_matmul_by_hand():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(matmul(a, b), [[2.0, 1.0], [4.0, 3.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)


def test_shape_errors_name_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        hadamard(np.ones((2, 3)), np.ones((3, 2)))


def test_as_matrix_promotes_and_rejects():
    assert as_matrix([[1, 2]]).dtype == np.float64
    with pytest.raises(ValueError):
        as_matrix(np.ones(3))


@given(mats((3, 4)), mats((4, 2)), mats((2, 3)))
def test_matmul_associative(a, b, c):
    lhs = matmul(matmul(a, b), c)
    rhs = matmul(a, matmul(b, c))
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (1 + np.abs(lhs).max()))


@given(mats((3, 3)), mats((3, 3)))
def test_hadamard_commutes(a, b):
    assert np.array_equal(hadamard(a, b), hadamard(b, a))


@given(mats((4, 4)))
def test_relu_nonnegative_and_idempotent(m):
    r = relu(m)
    assert (r >= 0).all()
    assert np.array_equal(relu(r), r)
    assert np.array_equal(r[m > 0], m[m > 0])


def test_relu_zero_stays_zero():
    assert relu(np.array([[0.0, -0.0, -1.0]])).tolist() == [[0.0, 0.0, 0.0]]


@given(mats((3, 3)))
def test_sigmoid_bounds_and_symmetry(m):
    s = sigmoid_act(m)
    assert ((s >= 0) & (s <= 1)).all()
    assert np.allclose(s + sigmoid_act(-m), 1.0)


def test_sigmoid_extreme_inputs_finite():
    s = sigmoid_act(np.array([[-1e4, 0.0, 1e4]]))
    assert np.isfinite(s).all()
    assert s.tolist() == [[0.0, 0.5, 1.0]]


def test_product_of_gaussians_negative_fraction():
    # BA entries are symmetric around 0; entries sharing a row or column are
    # correlated, so the band is wider than the independent binomial one
    rng = RngStream(4)
    ba = gaussian(64, 8, 1.0, rng) @ gaussian(8, 64, 1.0, rng)
    assert abs(float(np.mean(ba < 0)) - 0.5) < 0.05
