"""Numeric kernels: hand-computed values, oracles, and the FD gradient contract."""

import math

import numpy as np
import pytest

from pwhubert.numerics import (
    RngStream,
    gelu,
    gelu_bwd,
    layer_norm_rows,
    layer_norm_rows_bwd,
    linear,
    linear_bwd,
    softmax_rows,
    softmax_rows_bwd,
)


class TestSoftmaxRows:
    def test_symmetric_row(self):
        np.testing.assert_allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_huge_logit_does_not_overflow(self):
        out = softmax_rows(np.array([[1000.0, 0.0]]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_hand_evaluated_exp_sum(self):
        out = softmax_rows(np.array([[math.log(1.0), math.log(3.0)]]))
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = RngStream(0, "softmax").generator()
        m = rng.normal(size=(40, 7)) * 10
        out = softmax_rows(m)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_empty_matrix(self):
        out = softmax_rows(np.empty((0, 3)))
        assert out.shape == (0, 3)


class TestLayerNormRows:
    def test_zero_variance_row_maps_to_bias(self):
        out = layer_norm_rows(np.array([[1.0, 1.0, 1.0]]), np.ones(3), np.zeros(3), 1e-5)
        np.testing.assert_allclose(out, [[0.0, 0.0, 0.0]], atol=1e-12)

    def test_hand_normalized_row(self):
        out = layer_norm_rows(np.array([[0.0, 2.0]]), np.ones(2), np.zeros(2), 1e-12)
        np.testing.assert_allclose(out, [[-1.0, 1.0]], atol=1e-6)

    def test_affine_rescale(self):
        out = layer_norm_rows(
            np.array([[-1.0, 1.0]]), np.full(2, 2.0), np.ones(2), 1e-12
        )
        np.testing.assert_allclose(out, [[-1.0, 3.0]], atol=1e-6)

    def test_unit_gain_rows_are_standardized(self):
        rng = RngStream(1, "ln").generator()
        m = rng.normal(size=(30, 16)) * 3 + 5
        out = layer_norm_rows(m, np.ones(16), np.zeros(16), 1e-10)
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            layer_norm_rows(np.ones((2, 3)), np.ones(4), np.zeros(3), 1e-5)
        with pytest.raises(ValueError):
            layer_norm_rows(np.ones((2, 3)), np.ones(3), np.zeros(3), 0.0)


class TestLinear:
    def test_identity(self):
        m = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(linear(m, np.eye(3), np.zeros(3)), m)

    def test_arithmetic(self):
        out = linear(np.array([[1.0, 2.0]]), np.array([[1.0], [1.0]]), np.array([1.0]))
        np.testing.assert_array_equal(out, [[4.0]])

    def test_matches_naive_triple_loop(self):
        rng = RngStream(2, "linear").generator()
        m = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        expected = np.empty((3, 2))
        for i in range(3):
            for j in range(2):
                acc = b[j]
                for k in range(4):
                    acc += m[i, k] * w[k, j]
                expected[i, j] = acc
        np.testing.assert_allclose(linear(m, w, b), expected, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linear(np.ones((2, 3)), np.ones((4, 2)))

    def test_repeated_calls_bit_identical(self):
        rng = RngStream(3, "linear").generator()
        m, w, b = rng.normal(size=(5, 6)), rng.normal(size=(6, 4)), rng.normal(size=4)
        first = linear(m, w, b)
        assert (first == linear(m, w, b)).all()


class TestRngStream:
    def test_first_1000_draws_reproduce(self):
        a = RngStream(42, "tag").generator().random(1000)
        b = RngStream(42, "tag").generator().random(1000)
        assert (a == b).all()

    def test_distinct_tags_are_independent(self):
        a = RngStream(42, "tag-a").generator().random(1000)
        b = RngStream(42, "tag-b").generator().random(1000)
        assert (a != b).any()

    def test_distinct_counters_differ(self):
        a = RngStream(42, "tag", 0).generator().random(100)
        b = RngStream(42, "tag", 1).generator().random(100)
        assert (a != b).any()

    def test_negative_seed_ok(self):
        a = RngStream(-7, "tag").generator().random(10)
        b = RngStream(-7, "tag").generator().random(10)
        assert (a == b).all()


def _fd(fn, x, eps=1e-6):
    """Central finite differences of scalar fn at every entry of x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = fn()
        flat[i] = keep - eps
        down = fn()
        flat[i] = keep
        gf[i] = (up - down) / (2 * eps)
    return g


class TestBackwardKernels:
    """Each *_bwd kernel against central finite differences (float64)."""

    def setup_method(self):
        rng = RngStream(9, "bwd").generator()
        self.x = rng.normal(size=(5, 6))
        self.dy = rng.normal(size=(5, 6))

    def test_softmax_bwd(self):
        probs = softmax_rows(self.x)
        dx = softmax_rows_bwd(probs, self.dy)
        fd = _fd(lambda: float((softmax_rows(self.x) * self.dy).sum()), self.x)
        np.testing.assert_allclose(dx, fd, atol=1e-8)

    def test_layer_norm_bwd(self):
        rng = RngStream(10, "bwd").generator()
        gain, bias = rng.normal(size=6), rng.normal(size=6)
        loss = lambda: float((layer_norm_rows(self.x, gain, bias, 1e-5) * self.dy).sum())
        dm, dg, db = layer_norm_rows_bwd(self.x, gain, 1e-5, self.dy)
        np.testing.assert_allclose(dm, _fd(loss, self.x), atol=1e-7)
        np.testing.assert_allclose(dg, _fd(loss, gain), atol=1e-7)
        np.testing.assert_allclose(db, _fd(loss, bias), atol=1e-7)

    def test_linear_bwd(self):
        rng = RngStream(11, "bwd").generator()
        w, b = rng.normal(size=(6, 3)), rng.normal(size=3)
        dy = rng.normal(size=(5, 3))
        loss = lambda: float((linear(self.x, w, b) * dy).sum())
        dm, dw, db = linear_bwd(self.x, w, dy)
        np.testing.assert_allclose(dm, _fd(loss, self.x), atol=1e-8)
        np.testing.assert_allclose(dw, _fd(loss, w), atol=1e-8)
        np.testing.assert_allclose(db, _fd(loss, b), atol=1e-8)

    def test_gelu_bwd(self):
        loss = lambda: float((gelu(self.x) * self.dy).sum())
        np.testing.assert_allclose(gelu_bwd(self.x, self.dy), _fd(loss, self.x), atol=1e-8)
