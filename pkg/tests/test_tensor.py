from __future__ import annotations

import numpy as np
import pytest

from hkg.errors import ShapeError
from hkg.tensor import (
    Parameter,
    RngStream,
    glorot_init,
    matmul,
    matmul_backward,
    relu,
    relu_backward,
)

from conftest import central_difference, relative_error


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_hand_product(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0], [6.0]])
        assert np.array_equal(matmul(a, b), np.array([[17.0], [39.0]]))

    def test_backward_shapes_and_values(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        d_out = rng.standard_normal((3, 2))
        da, db = matmul_backward(a, b, d_out)
        assert da.shape == a.shape and db.shape == b.shape
        assert np.allclose(da, d_out @ b.T)
        assert np.allclose(db, a.T @ d_out)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        w = rng.standard_normal((3, 3))  # fixed projection making a scalar loss

        def loss():
            return float(np.sum(matmul(a, b) * w))

        da, db = matmul_backward(a, b, w)
        assert relative_error(da, central_difference(loss, a)) < 1e-5
        assert relative_error(db, central_difference(loss, b)) < 1e-5

    def test_associativity(self):
        rng = np.random.default_rng(2)
        mats = [rng.uniform(0.1, 1.0, (4, 4)) for _ in range(3)]
        left = matmul(matmul(mats[0], mats[1]), mats[2])
        right = matmul(mats[0], matmul(mats[1], mats[2]))
        assert relative_error(left, right) < 1e-12


class TestRelu:
    def test_elementwise(self):
        assert np.array_equal(relu(np.array([[-1.0, 2.0]])), np.array([[0.0, 2.0]]))

    def test_all_negative(self):
        x = -np.ones((2, 2))
        assert np.array_equal(relu(x), np.zeros((2, 2)))
        assert np.array_equal(relu_backward(x, np.ones((2, 2))), np.zeros((2, 2)))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 3))
        x[np.abs(x) < 0.05] += 0.2  # keep entries away from the kink
        w = rng.standard_normal((3, 3))

        def loss():
            return float(np.sum(relu(x) * w))

        grad = relu_backward(x, w)
        assert relative_error(grad, central_difference(loss, x)) < 1e-6

    def test_subgradient_at_zero_is_zero(self):
        x = np.zeros((1, 3))
        assert np.array_equal(relu_backward(x, np.ones((1, 3))), np.zeros((1, 3)))


class TestGlorot:
    def test_same_seed_identical(self):
        a = glorot_init(5, 7, RngStream(42))
        b = glorot_init(5, 7, RngStream(42))
        assert np.array_equal(a, b)

    def test_bound(self):
        m = glorot_init(6, 10, RngStream(0))
        assert np.max(np.abs(m)) <= np.sqrt(6.0 / 16)

    def test_distinct_across_seeds(self):
        mats = [glorot_init(3, 3, RngStream(s)) for s in range(100)]
        distinct = {m.tobytes() for m in mats}
        assert len(distinct) == 100

    def test_rejects_zero_dims(self):
        with pytest.raises(ShapeError):
            glorot_init(0, 3, RngStream(0))


class TestRngStream:
    def test_same_seed_same_sequence(self):
        assert np.array_equal(RngStream(9).random(10), RngStream(9).random(10))

    def test_derived_streams_independent_of_order(self):
        root = RngStream(4)
        a_first = root.derive("a").random(4)
        b_after = root.derive("b").random(4)
        root2 = RngStream(4)
        b_first = root2.derive("b").random(4)
        a_after = root2.derive("a").random(4)
        assert np.array_equal(a_first, a_after)
        assert np.array_equal(b_after, b_first)

    def test_string_and_int_keys(self):
        assert not np.array_equal(
            RngStream(1).derive("x").random(3), RngStream(1).derive(0).random(3)
        )


class TestParameter:
    def test_grad_starts_zero_and_zeroes(self):
        p = Parameter(np.ones((2, 2)), "w")
        assert np.array_equal(p.grad, np.zeros((2, 2)))
        p.grad += 3.0
        p.zero_grad()
        assert np.array_equal(p.grad, np.zeros((2, 2)))
