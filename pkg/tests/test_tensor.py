import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tcl.errors import ContractError, NumericError, ShapeError
from tcl.losses import instance_loss
from tcl.tensor import (
    Adam,
    Tensor,
    backward,
    l2_normalize_rows,
    matmul,
    mul,
    no_grad,
    softmax_rows,
    total,
)

from oracles import finite_difference, max_relative_error


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[5, 6], [7, 8]]))
        np.testing.assert_array_equal(out.values, [[5, 6], [7, 8]])

    def test_arithmetic(self):
        out = Tensor([[1, 2], [3, 4]]) @ Tensor([[5, 6], [7, 8]])
        np.testing.assert_array_equal(out.values, [[19, 22], [43, 50]])

    def test_zero(self):
        np.testing.assert_array_equal(matmul(Tensor([[0, 0]]), Tensor([[1], [1]])).values, [[0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0]])).values, [[0.5, 0.5]])

    def test_log_odds(self):
        out = softmax_rows(Tensor([[math.log(1), math.log(3)]])).values
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-15)

    def test_large_values_do_not_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]])).values
        assert np.isfinite(out).all()
        assert out[0, 0] == pytest.approx(1.0) and out[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_nan_input_is_numeric_error(self):
        with pytest.raises(NumericError):
            softmax_rows(Tensor(np.array([[np.nan, 0.0]])))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_shift_invariance(self, x, c):
        a = softmax_rows(Tensor(x)).values
        b = softmax_rows(Tensor(x + c)).values
        assert np.abs(a - b).max() <= 1e-9
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)


class TestNormalize:
    @pytest.mark.parametrize(
        "row, expected",
        [([3.0, 4.0], [0.6, 0.8]), ([1.0, 0.0], [1.0, 0.0]), ([0.0, 0.0], [0.0, 0.0])],
    )
    def test_examples(self, row, expected):
        np.testing.assert_allclose(l2_normalize_rows(Tensor([row])).values, [expected], atol=1e-15)


class TestBackward:
    def test_linear(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        backward(total(x))
        np.testing.assert_array_equal(x.grad, [[1, 1]])

    def test_quadratic(self):
        x = Tensor([[3.0]], requires_grad=True)
        backward(total(mul(x, x)))
        np.testing.assert_array_equal(x.grad, [[6.0]])

    def test_accumulates_without_reset(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        backward(total(x))
        backward(total(x))
        np.testing.assert_array_equal(x.grad, [[2, 2]])
        x.zero_grad()
        np.testing.assert_array_equal(x.grad, [[0, 0]])

    def test_non_scalar_rejected(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * 2.0)

    def test_instance_loss_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        z_vals = rng.standard_normal((8, 5))
        z = Tensor(z_vals, requires_grad=True)
        backward(instance_loss(z, 0.5))
        numeric = finite_difference(lambda: instance_loss(Tensor(z_vals), 0.5).item(), z_vals)
        assert max_relative_error(z.grad, numeric) <= 1e-4

    def test_no_grad_records_nothing(self):
        x = Tensor([[1.0]], requires_grad=True)
        with no_grad():
            y = x * 3.0
        assert not y.requires_grad

    def test_determinism(self):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal((6, 4))
        runs = []
        for _ in range(2):
            z = Tensor(vals, requires_grad=True)
            loss = instance_loss(z, 0.5)
            backward(loss)
            runs.append((loss.item(), z.grad.copy()))
        assert runs[0][0] == runs[1][0]
        np.testing.assert_array_equal(runs[0][1], runs[1][1])


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        w = Tensor([[1.0, -2.0]], requires_grad=True)
        opt = Adam({"w": w}, lr=0.1)
        opt.step()
        np.testing.assert_array_equal(w.values, [[1.0, -2.0]])
        assert opt.step_count == 1

    def test_first_step_formula(self):
        w = Tensor([[1.0]], requires_grad=True)
        opt = Adam({"w": w}, lr=0.1, beta1=0.0, beta2=0.0)
        w.grad = np.array([[1.0]])
        opt.step()
        assert w.values[0, 0] == pytest.approx(1 - 0.1 * (1 / (1 + 1e-8)), abs=1e-15)

    def test_identical_params_identical_updates(self):
        a = Tensor([[0.5, 0.5]], requires_grad=True)
        b = Tensor([[0.5, 0.5]], requires_grad=True)
        opt = Adam({"a": a, "b": b}, lr=0.01, weight_decay=1e-4)
        for g in ([0.3, -0.2], [0.1, 0.4]):
            a.grad = np.array([g])
            b.grad = np.array([g])
            opt.step()
        np.testing.assert_array_equal(a.values, b.values)

    def test_weight_decay_is_l2_on_gradient(self):
        w = Tensor([[2.0]], requires_grad=True)
        opt = Adam({"w": w}, lr=0.1, beta1=0.0, beta2=0.0, weight_decay=0.5)
        opt.step()
        # effective gradient 0.5 * 2 = 1 -> normalized step of lr
        assert w.values[0, 0] == pytest.approx(2.0 - 0.1 / (1 + 1e-8))

    def test_accumulators_start_at_zero(self):
        opt = Adam({"w": Tensor(np.ones((2, 3)), requires_grad=True)})
        assert opt.step_count == 0
        assert not opt.m["w"].any() and not opt.v["w"].any()

    def test_nan_gradient_aborts(self):
        w = Tensor([[1.0]], requires_grad=True)
        opt = Adam({"w": w}, lr=0.1)
        w.grad = np.array([[np.nan]])
        with pytest.raises(NumericError):
            opt.step()
        assert w.values[0, 0] == 1.0 and opt.step_count == 0
