import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmfusion import tensor as T
from mmfusion.errors import ContractError, DimensionError


def leaf(a, name):
    return T.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True, name=name)


def weighted_sum(out, rng):
    """Scalar probe: a random linear functional of ``out``."""
    w = rng.normal(size=out.shape)
    return T.tsum(T.mul(out, w))


def test_affine_identity_and_bias():
    y = T.affine([1.0, 2.0], np.eye(2), [0.0, 0.0])
    np.testing.assert_array_equal(y.data, [1.0, 2.0])
    y = T.affine([1.0, 1.0], [[1.0, 1.0]], [-2.0])
    np.testing.assert_array_equal(y.data, [0.0])


def test_affine_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2, 2\)"):
        T.affine(np.ones(3), np.eye(2), np.zeros(2))


def test_affine_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x, W, b = leaf(rng.normal(size=4), "x"), leaf(rng.normal(size=(4, 4)), "W"), leaf(rng.normal(size=4), "b")
    w = rng.normal(size=4)
    err = T.check_gradient(lambda: T.tsum(T.mul(T.affine(x, W, b), w)), {"x": x, "W": W, "b": b})
    assert err < 1e-6


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax([0.0, 0.0, 0.0]).data, [1 / 3] * 3, atol=1e-15)
    c = 123.25
    np.testing.assert_allclose(T.softmax([c, c]).data, T.softmax([0.0, 0.0]).data, atol=1e-15)
    p = T.softmax([1000.0, 0.0]).data
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0) and p[1] < 1e-300


def test_softmax_empty_is_dimension_error():
    with pytest.raises(DimensionError):
        T.softmax(np.zeros(0))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_normalised_and_shift_invariant(v, shift):
    p = T.softmax(v).data
    assert np.all(p > 0) or np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(T.softmax(v + shift).data, p, atol=1e-12)


def test_softmax_sums_to_one_on_1000_random_vectors():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        v = rng.normal(scale=5.0, size=rng.integers(1, 20))
        p = T.softmax(v).data
        assert abs(p.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(T.softmax(v + rng.normal() * 10).data, p, atol=1e-12)


def test_elementwise_values():
    assert T.elementwise("sigmoid", 0.0).data == 0.5
    assert T.elementwise("tanh", 0.0).data == 0.0
    np.testing.assert_array_equal(T.elementwise("mul", [2.0, 3.0], [4.0, 5.0]).data, [8.0, 15.0])
    np.testing.assert_array_equal(T.elementwise("add", [2.0, 3.0], [4.0, 5.0]).data, [6.0, 8.0])


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        T.elementwise("mul", np.ones(2), np.ones(3))


def test_sigmoid_is_stable_for_large_inputs():
    y = T.sigmoid(np.array([-800.0, 800.0])).data
    np.testing.assert_array_equal(y, [0.0, 1.0])


@pytest.mark.parametrize(
    "build",
    [
        lambda a, b: T.tanh(a),
        lambda a, b: T.sigmoid(a),
        lambda a, b: T.exp(T.mul(a, 0.3)),
        lambda a, b: T.log(T.add(T.mul(a, a), 1.0)),
        lambda a, b: T.mul(a, b),
        lambda a, b: T.sub(a, b),
        lambda a, b: T.add(a, T.getitem(b, 0)),
        lambda a, b: T.softmax(a),
        lambda a, b: T.log_softmax(a),
        lambda a, b: T.matmul(a, T.reshape(b, (4, 3))),
        lambda a, b: T.inner(a, T.getitem(b, 1)),
        lambda a, b: T.concat([a, b], axis=0),
        lambda a, b: T.stack([T.tanh(a), b]),
        lambda a, b: T.tsum(a, axis=1),
        lambda a, b: T.mean(T.mul(a, b)),
        lambda a, b: T.take_rows(a, [2, 0, 2]),
        lambda a, b: T.pick(T.log_softmax(a), [1, 0, 3]),
    ],
)
def test_every_op_passes_gradient_check(build):
    rng = np.random.default_rng(2)
    a, b = leaf(rng.normal(size=(3, 4)), "a"), leaf(rng.normal(size=(3, 4)), "b")
    probe = rng.normal(size=build(a, b).shape)
    err = T.check_gradient(lambda: T.tsum(T.mul(build(a, b), probe)), {"a": a, "b": b})
    assert err < 1e-6


def test_backward_sum_of_squares():
    x = leaf([1.0, 2.0], "x")
    grads = T.backward(T.tsum(T.mul(x, x)))
    np.testing.assert_array_equal(grads["x"], [2.0, 4.0])


def test_cross_entropy_gradient_is_p_minus_onehot():
    z = leaf(np.zeros(5), "z")
    loss = T.neg(T.pick(T.log_softmax(T.reshape(z, (1, 5))), [3]))
    g = T.backward(T.tsum(loss))["z"]
    expected = np.full(5, 0.2)
    expected[3] -= 1.0
    np.testing.assert_allclose(g, expected, atol=1e-15)


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        T.backward(T.mul(leaf([1.0, 2.0], "x"), 2.0))


def test_gradient_accumulates_over_uses():
    x = leaf([3.0], "x")
    y = T.add(T.mul(x, x), T.mul(x, 4.0))
    assert T.backward(T.tsum(y))["x"][0] == 10.0


def test_backward_is_bit_deterministic():
    rng = np.random.default_rng(3)
    W = leaf(rng.normal(size=(6, 6)), "W")
    x = rng.normal(size=(5, 6))

    def loss():
        h = x
        for _ in range(4):
            h = T.tanh(T.affine(h, W))
        return T.tsum(T.softmax(h))

    g1 = T.backward(loss())["W"].copy()
    g2 = T.backward(loss())["W"].copy()
    assert np.array_equal(g1, g2)


def test_no_grad_records_nothing():
    x = leaf([1.0], "x")
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad


def test_check_gradient_quadratic():
    x = leaf([0.3, -1.2, 2.0], "x")
    assert T.check_gradient(lambda: T.tsum(T.mul(x, x)), {"x": x}) < 1e-9


def test_check_gradient_detects_nondeterminism():
    rng = np.random.default_rng(4)
    x = leaf([1.0], "x")
    with pytest.raises(ContractError):
        T.check_gradient(lambda: T.tsum(T.mul(x, rng.normal())), {"x": x})


@pytest.mark.parametrize("eps", [0.0, -1e-5, 0.1])
def test_check_gradient_rejects_bad_eps(eps):
    x = leaf([1.0], "x")
    with pytest.raises(ContractError):
        T.check_gradient(lambda: T.tsum(x), {"x": x}, eps)


def test_forward_outputs_finite_on_finite_inputs():
    rng = np.random.default_rng(5)
    x = rng.normal(scale=100, size=(4, 7))
    for y in (T.tanh(x), T.sigmoid(x), T.softmax(x), T.log_softmax(x)):
        assert np.all(np.isfinite(y.data))
