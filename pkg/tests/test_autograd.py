"""Engine-level checks for the tensor graph.

Forward values are compared against plain numpy mirrors and a handful
of frozen constants; every backward rule is cross-checked with central
finite differences on randomly weighted scalar losses, the same way
the model-level gradient check works but at single-operation scale.
"""

import numpy as np
import pytest

from poseclip.autograd import (
    NORM_EPS,
    Tensor,
    add,
    as_tensor,
    cross_entropy_mean,
    exp,
    l2_normalize_rows,
    matmul,
    mul,
    softmax_rows,
    tanh,
    transpose,
    tsum,
)
from poseclip.errors import ContractError, ShapeError


def numeric_grad(build, arr, h=1e-6):
    """Central-difference gradient of a scalar-valued graph builder."""
    grad = np.zeros_like(arr)
    work = arr.copy()
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = work[idx]
        work[idx] = orig + h
        f_plus = build(work).item()
        work[idx] = orig - h
        f_minus = build(work).item()
        work[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


class TestTensorBasics:
    def test_stores_float64_read_only(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.data.dtype == np.float64
        assert t.data.flags["C_CONTIGUOUS"]
        with pytest.raises(ValueError):
            t.data[0, 0] = 9.0

    def test_rejects_non_finite_values(self):
        with pytest.raises(ValueError):
            Tensor([1.0, np.nan])
        with pytest.raises(ValueError):
            Tensor([[np.inf]])

    def test_scalar_results_stay_zero_dim(self):
        """Reductions produce 0-d tensors, not length-1 vectors."""
        assert tsum(Tensor(np.ones((2, 3)))).shape == ()
        assert cross_entropy_mean(Tensor([[0.0, 1.0]]), [1]).shape == ()

    def test_item_requires_single_element(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()
        assert Tensor([[3.0]]).item() == 3.0

    def test_backward_requires_scalar(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            add(t, 1.0).backward()

    def test_as_tensor_passthrough(self):
        t = Tensor([1.0])
        assert as_tensor(t) is t
        assert isinstance(as_tensor([1.0, 2.0]), Tensor)


class TestForwardValues:
    def test_matmul_matches_numpy(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            n, k, m = rng.integers(1, 7, size=3)
            a = rng.normal(size=(n, k))
            b = rng.normal(size=(k, m))
            np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, a @ b, rtol=1e-15)

    def test_matmul_shape_errors(self):
        with pytest.raises(ShapeError):
            matmul(Tensor([1.0, 2.0]), Tensor([[1.0], [2.0]]))
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_row_bias_broadcast(self):
        a = np.arange(6.0).reshape(2, 3)
        b = np.array([10.0, 20.0, 30.0])
        np.testing.assert_array_equal(add(Tensor(a), Tensor(b)).data, a + b)

    def test_add_rejects_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_mul_scalar_and_elementwise(self):
        a = np.array([[1.0, -2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(mul(Tensor(a), 0.5).data, a * 0.5)
        np.testing.assert_array_equal(mul(Tensor(a), Tensor(a)).data, a * a)
        with pytest.raises(ShapeError):
            mul(Tensor(np.ones((2, 2))), Tensor(np.ones(2)))

    def test_operator_sugar(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0, 4.0]])
        np.testing.assert_array_equal((a + b).data, [[4.0, 6.0]])
        np.testing.assert_array_equal((a - b).data, [[-2.0, -2.0]])
        np.testing.assert_array_equal((a * 2.0).data, [[2.0, 4.0]])
        np.testing.assert_array_equal((-a).data, [[-1.0, -2.0]])
        np.testing.assert_array_equal((a @ b.T).data, [[11.0]])

    def test_softmax_frozen_values(self):
        """softmax([1, 2, 3]) against the textbook constants."""
        out = softmax_rows(Tensor([[1.0, 2.0, 3.0]])).data
        np.testing.assert_allclose(
            out, [[0.09003057317038046, 0.24472847105479764, 0.6652409557748219]],
            rtol=1e-12,
        )

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.normal(scale=5.0, size=(rng.integers(1, 6), rng.integers(2, 9)))
            p = softmax_rows(Tensor(x)).data
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(p > 0)

    def test_softmax_shift_invariance(self):
        x = np.array([[1.0, 2.0, 3.0], [-4.0, 0.0, 4.0]])
        a = softmax_rows(Tensor(x)).data
        b = softmax_rows(Tensor(x + 123.0)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_softmax_survives_huge_logits(self):
        p = softmax_rows(Tensor([[1000.0, 0.0]])).data
        np.testing.assert_allclose(p, [[1.0, 0.0]], atol=1e-12)

    def test_cross_entropy_frozen_value(self):
        loss = cross_entropy_mean(Tensor([[1.0, 2.0, 3.0]]), [2]).item()
        np.testing.assert_allclose(loss, 0.4076059644443804, rtol=1e-12)

    def test_cross_entropy_uniform_rows_give_log_k(self):
        for k in (2, 3, 6, 10):
            loss = cross_entropy_mean(Tensor(np.zeros((4, k))), [0, 1, 0, k - 1]).item()
            np.testing.assert_allclose(loss, np.log(k), atol=1e-12)

    def test_cross_entropy_target_validation(self):
        logits = Tensor(np.zeros((2, 3)))
        with pytest.raises(IndexError):
            cross_entropy_mean(logits, [0, 3])
        with pytest.raises(IndexError):
            cross_entropy_mean(logits, [-1, 0])
        with pytest.raises(ShapeError):
            cross_entropy_mean(logits, [0])

    def test_l2_normalize_makes_unit_rows(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(5, 4))
        y = l2_normalize_rows(Tensor(x)).data
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)

    def test_l2_normalize_zero_row_stays_finite(self):
        x = np.zeros((1, 3))
        y = l2_normalize_rows(Tensor(x)).data
        assert np.all(np.isfinite(y))
        np.testing.assert_array_equal(y, x / NORM_EPS)

    def test_transpose_roundtrip(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(transpose(transpose(Tensor(a))).data, a)
        with pytest.raises(ShapeError):
            transpose(Tensor([1.0, 2.0]))


class TestGradients:
    """Every backward rule against central finite differences."""

    def check(self, build, arr, atol=1e-7):
        t = Tensor(arr, requires_grad=True)
        loss = build(t)
        loss.backward()
        np.testing.assert_allclose(t.grad, numeric_grad(lambda x: build(Tensor(x)), arr), atol=atol)

    def test_matmul_both_operands(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        w = rng.normal(size=(3, 2))
        self.check(lambda t: tsum(mul(matmul(t, Tensor(b)), Tensor(w))), a)
        self.check(lambda t: tsum(mul(matmul(Tensor(a), t), Tensor(w))), b)

    def test_add_with_row_bias(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 5))
        bias = rng.normal(size=5)
        w = rng.normal(size=(3, 5))
        self.check(lambda t: tsum(mul(add(Tensor(x), t), Tensor(w))), bias)
        self.check(lambda t: tsum(mul(add(t, Tensor(bias)), Tensor(w))), x)

    def test_mul_elementwise_and_scalar(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 3))
        y = rng.normal(size=(2, 3))
        self.check(lambda t: tsum(mul(t, Tensor(y))), x)
        self.check(lambda t: tsum(mul(Tensor(x), mul(t, t))), np.array([1.7]))

    def test_tanh(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 3))
        w = rng.normal(size=(3, 3))
        self.check(lambda t: tsum(mul(tanh(t), Tensor(w))), x)

    def test_exp(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 4))
        w = rng.normal(size=(2, 4))
        self.check(lambda t: tsum(mul(exp(t), Tensor(w))), x)

    def test_transpose(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 5))
        w = rng.normal(size=(5, 2))
        self.check(lambda t: tsum(mul(transpose(t), Tensor(w))), x)

    def test_softmax_rows(self):
        rng = np.random.default_rng(10)
        x = rng.normal(scale=2.0, size=(3, 4))
        w = rng.normal(size=(3, 4))
        self.check(lambda t: tsum(mul(softmax_rows(t), Tensor(w))), x)

    def test_l2_normalize_rows(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(4, 3)) + 0.5
        w = rng.normal(size=(4, 3))
        self.check(lambda t: tsum(mul(l2_normalize_rows(t), Tensor(w))), x)

    def test_cross_entropy_mean(self):
        rng = np.random.default_rng(13)
        x = rng.normal(scale=2.0, size=(4, 5))
        targets = [0, 3, 2, 4]
        self.check(lambda t: cross_entropy_mean(t, targets), x)

    def test_reused_node_accumulates(self):
        """A tensor feeding two graph paths sums both contributions."""
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        loss = tsum(add(mul(x, 2.0), mul(x, 3.0)))
        loss.backward()
        np.testing.assert_allclose(x.grad, [5.0, 5.0, 5.0], atol=1e-15)

    def test_square_via_self_product(self):
        x = Tensor([1.0, -2.0, 0.5], requires_grad=True)
        tsum(mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2.0 * x.data, atol=1e-15)

    def test_constants_receive_no_grad(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 2)))
        tsum(matmul(a, b)).backward()
        assert a.grad is not None
        assert b.grad is None

    def test_diamond_graph_topological_order(self):
        """Both branches of a diamond contribute exactly once."""
        x = Tensor([2.0], requires_grad=True)
        left = mul(x, 3.0)
        right = mul(x, 4.0)
        loss = tsum(mul(add(left, right), add(left, right)))
        loss.backward()
        # d/dx (7x)^2 = 98x, at x = 2
        np.testing.assert_allclose(x.grad, [196.0], atol=1e-12)
