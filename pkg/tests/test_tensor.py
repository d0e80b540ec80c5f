import math

import numpy as np
import pytest

from helpers import finite_diff_check
from momentset import tensor as tt
from momentset.errors import DegenerateVectorError, DomainError, RankError, ShapeError
from momentset.tensor import Tensor


@pytest.fixture(autouse=True)
def fresh_tape():
    tt.clear_tape()
    yield
    tt.clear_tape()


class TestMatmul:
    def test_identity(self):
        out = tt.matmul(Tensor(np.eye(2)), Tensor([[3, 4], [5, 6]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_dot_product(self):
        out = tt.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[11]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        out = tt.matmul(Tensor(a), Tensor(b)).data
        expect = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expect[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            tt.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestElementwise:
    def test_sigmoid_zero(self):
        assert tt.sigmoid(Tensor(0.0)).item() == 0.5

    def test_add(self):
        np.testing.assert_array_equal(
            tt.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data, [4.0, 6.0])

    def test_sigmoid_against_scalar_formula(self):
        for x in [-30.0, -3.0, 0.7, 5.0, 30.0]:
            got = tt.sigmoid(Tensor(x)).item()
            assert 0.0 < got < 1.0
            assert got == pytest.approx(1.0 / (1.0 + math.exp(-x)), rel=1e-12)

    def test_sigmoid_extreme_no_overflow(self):
        out = tt.sigmoid(Tensor([-1000.0, 1000.0])).data
        assert np.all(np.isfinite(out))

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            tt.log(Tensor([1.0, 0.0]))

    def test_neg_scale(self):
        np.testing.assert_array_equal(tt.neg(Tensor([1.0, -2.0])).data, [-1.0, 2.0])
        np.testing.assert_array_equal(tt.scale(Tensor([1.0, 2.0]), 3.0).data, [3.0, 6.0])


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(
            tt.l2_normalize(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]], atol=1e-12)

    def test_unit_vector_unchanged(self):
        v = np.array([[1.0, 0.0, 0.0]])
        np.testing.assert_allclose(tt.l2_normalize(Tensor(v)).data, v, atol=1e-15)

    def test_random_rows_unit_norm(self):
        rng = np.random.default_rng(1)
        out = tt.l2_normalize(Tensor(rng.standard_normal((5, 7)))).data
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)

    def test_degenerate_row(self):
        with pytest.raises(DegenerateVectorError):
            tt.l2_normalize(Tensor(np.zeros((1, 4))))


class TestSoftmaxLayernorm:
    def test_softmax_uniform(self):
        np.testing.assert_allclose(
            tt.softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]], atol=1e-15)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 5))
        a = tt.softmax(Tensor(x)).data
        b = tt.softmax(Tensor(x + 13.7)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        out = tt.softmax(Tensor(rng.standard_normal((4, 6)))).data
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_layernorm_moments(self):
        rng = np.random.default_rng(4)
        out = tt.layernorm(Tensor(rng.standard_normal((3, 8)))).data
        assert np.max(np.abs(out.mean(axis=1))) < 1e-9
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-5)


class TestBackward:
    def test_quadratic(self):
        x = Tensor(3.0, requires_grad=True)
        tt.backward(x * x)
        assert x.grad == pytest.approx(6.0)

    def test_sigmoid_derivative_at_zero(self):
        x = Tensor(0.0, requires_grad=True)
        tt.backward(tt.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(RankError):
            tt.backward(x * x)

    def test_reused_tensor_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x + x  # dy/dx = 2x + 1 = 5
        tt.backward(y)
        assert x.grad == pytest.approx(5.0)


class TestFiniteDifferences:
    """Analytic vs central-difference gradients for every op."""

    def _check(self, build, *shapes, seed=0):
        rng = np.random.default_rng(seed)
        params = [Tensor(rng.standard_normal(s), requires_grad=True)
                  for s in shapes]
        finite_diff_check(lambda: build(*params), params, rng)

    def test_matmul(self):
        self._check(lambda a, b: tt.tmean(tt.matmul(a, b)), (3, 4), (4, 2))

    def test_add_mul_broadcast(self):
        self._check(lambda a, b: tt.tmean(a * b + b), (3, 4), (4,))

    def test_sigmoid(self):
        self._check(lambda a: tt.tmean(tt.sigmoid(a)), (2, 5))

    def test_log(self):
        rng = np.random.default_rng(5)
        p = Tensor(rng.uniform(0.5, 2.0, (3, 3)), requires_grad=True)
        finite_diff_check(lambda: tt.tmean(tt.log(p)), [p], rng)

    def test_exp_gelu(self):
        self._check(lambda a: tt.tmean(tt.exp(a) + tt.gelu(a)), (2, 4))

    def test_softmax(self):
        self._check(lambda a: tt.tmean(tt.softmax(a) * tt.softmax(a)), (3, 5))

    def test_layernorm(self):
        self._check(lambda a: tt.tmean(tt.sigmoid(tt.layernorm(a))), (3, 6))

    def test_l2_normalize(self):
        self._check(lambda a: tt.tmean(tt.sigmoid(tt.l2_normalize(a))), (4, 5))

    def test_structural_ops(self):
        def build(a, b):
            joined = tt.cat([a, tt.transpose(b)], axis=0)
            return tt.tmean(tt.narrow(joined, 1, 1, 2) * 1.5)
        self._check(build, (2, 4), (4, 3))

    def test_sum_axes(self):
        self._check(lambda a: tt.tmean(tt.sigmoid(tt.tsum(a, axis=0))), (3, 4))


def test_forward_activations_finite():
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((5, 8)) * 10, requires_grad=True)
    y = tt.softmax(tt.layernorm(tt.gelu(x)))
    assert np.all(np.isfinite(y.data))
