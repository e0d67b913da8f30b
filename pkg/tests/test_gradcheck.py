import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ACTIVATIONS, VARIANTS
from dualora.adapters import init_lora
from dualora.gradcheck import (KINK_MARGIN, REL_TOL, check_gradients, differentiable_params,
                               kink_distance, make_instance)
from dualora.matrix import RngStream, gaussian


@pytest.mark.parametrize("variant,act", list(itertools.product(VARIANTS, ACTIVATIONS)))
def test_magnitude_path_matches_fd(variant, act):
    adapter, x, y = make_instance(6, 6, 2, 2, seed=1, variant=variant, magnitude_activation=act)
    res = check_gradients(adapter, x, y)
    assert res.passed, res.report()


@given(st.integers(6, 16), st.integers(2, 4), st.integers(0, 10**6))
def test_fd_over_sizes(n, r, seed):
    adapter, x, y = make_instance(n, n, r, r, seed=seed)
    assert kink_distance(adapter) > KINK_MARGIN
    assert max(check_gradients(adapter, x, y).max_rel_error.values()) < REL_TOL


def test_no_sign_checks_direction_factors():
    adapter, x, y = make_instance(6, 6, 2, 2, variant="no_sign")
    assert differentiable_params(adapter) == ("A", "B", "C", "D")
    assert check_gradients(adapter, x, y).passed


def test_lora_matches_fd():
    rng = RngStream(0)
    a = init_lora(6, 6, 2, std=0.5, rng=rng, zero_b=False)
    res = check_gradients(a, gaussian(6, 5, 1.0, rng), gaussian(6, 5, 1.0, rng))
    assert res.passed
    assert res.min_kink_distance == float("inf")


def test_corrupted_backward_is_caught():
    adapter, x, y = make_instance(6, 6, 2, 2, seed=0)
    res = check_gradients(adapter, x, y, corrupt_relu_backward=True)
    assert not res.passed
    assert "FAIL" in res.report()


def test_make_instance_respects_margin():
    adapter, _, _ = make_instance(8, 8, 3, 3, seed=5, margin=1e-2)
    assert np.abs(adapter.B @ adapter.A).min() > 1e-2
    with pytest.raises(RuntimeError):
        make_instance(8, 8, 3, 3, margin=10.0, max_tries=3)
