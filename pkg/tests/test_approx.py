import numpy as np
import pytest
from hypothesis import given, strategies as st

from imresample.approx import (ConstantStep, LinearValueFunction, RMSProp, TabularFeatures, TileCoder,
                               apply_update, make_optimizer)
from imresample.exceptions import NonFiniteUpdate, OutOfBounds


def test_tile_coder_dimensions():
    tc = TileCoder([0, 0], [11, 11], 64, 8)
    assert tc.n_features == 64 * 81
    idx = tc.indices([5.0, 5.0])
    assert idx.shape == (64,)
    # one active tile per tiling
    assert np.all(idx // 81 == np.arange(64))


@given(st.floats(0, 11), st.floats(0, 11))
def test_tile_indices_in_range(x, y):
    tc = TileCoder([0, 0], [11, 11], 64, 8)
    idx = tc.indices([x, y])
    assert idx.min() >= 0 and idx.max() < tc.n_features


def test_tile_coder_generalises_locally():
    tc = TileCoder([0, 0], [11, 11], 64, 8)
    a = set(tc.indices([3.0, 3.0]))
    near = set(tc.indices([3.05, 3.0]))
    far = set(tc.indices([9.0, 9.0]))
    assert len(a & near) > 56
    assert not a & far


def test_tile_coder_rejects_outside_points():
    tc = TileCoder([0, 0], [1, 1], 4, 2)
    with pytest.raises(OutOfBounds):
        tc.indices([1.5, 0.5])


def test_linear_value_function_and_gradient():
    vf = LinearValueFunction(TabularFeatures(3), [1.0, 2.0, 3.0])
    assert vf(1) == 2.0
    np.testing.assert_array_equal(vf.gradient(2), [0, 0, 1])
    np.testing.assert_array_equal(vf.values([0, 2]), [1.0, 3.0])
    with pytest.raises(ValueError):
        LinearValueFunction(TabularFeatures(3), [1.0])


def test_constant_step():
    theta = np.zeros(2)
    ConstantStep(0.5).step(theta, np.array([1.0, -2.0]))
    np.testing.assert_array_equal(theta, [0.5, -1.0])


def test_rmsprop_fixed_point_and_sparsity():
    opt = RMSProp(0.01)
    theta = np.zeros(3)
    u = np.array([2.0, 0.0, -0.5])
    for _ in range(3000):
        before = theta.copy()
        opt.step(theta, u)
    step = theta - before
    # accumulator -> u^2, so each step -> alpha * sign(u)
    np.testing.assert_allclose(step[[0, 2]], [0.01, -0.01], rtol=1e-3)
    assert step[1] == 0.0 and opt.acc[1] == 0.0


def test_make_optimizer():
    assert isinstance(make_optimizer("constant", 0.1), ConstantStep)
    assert isinstance(make_optimizer("rmsprop", 0.1, 4), RMSProp)
    with pytest.raises(KeyError):
        make_optimizer("adam", 0.1)


def test_non_finite_updates_raise():
    vf = LinearValueFunction(TabularFeatures(2))
    with pytest.raises(NonFiniteUpdate):
        apply_update(vf, ConstantStep(1.0), np.array([np.nan, 0.0]))
    with pytest.raises(NonFiniteUpdate):
        with np.errstate(over="ignore"):
            apply_update(vf, ConstantStep(1e308), np.array([1e308, 0.0]))
