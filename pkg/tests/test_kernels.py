"""Kernel tests against brute-force oracles written independently below."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mstrack.errors import ShapeError
from mstrack.kernels import bilinear_resize, channel_argmax, matmul, softmax


def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += float(a[i, p]) * float(b[p, j])
            out[i, j] = acc
    return out.astype(np.float32)


def softmax_oracle(x, axis, temperature):
    x = np.asarray(x, dtype=np.float64)
    moved = np.moveaxis(x, axis, -1)
    out = np.empty_like(moved)
    flat = moved.reshape(-1, moved.shape[-1])
    oflat = out.reshape(-1, moved.shape[-1])
    for r in range(flat.shape[0]):
        row = flat[r] / temperature
        m = row.max()
        e = np.array([math.exp(v - m) for v in row])
        oflat[r] = e / e.sum()
    return np.moveaxis(out, -1, axis).astype(np.float32)


def bilinear_oracle(x, nh, nw):
    h, w = x.shape[:2]
    out = np.zeros((nh, nw) + x.shape[2:], dtype=np.float64)
    for oy in range(nh):
        sy = (oy + 0.5) * h / nh - 0.5
        y0 = int(math.floor(sy))
        fy = sy - y0
        y0c = min(max(y0, 0), h - 1)
        y1c = min(max(y0 + 1, 0), h - 1)
        for ox in range(nw):
            sx = (ox + 0.5) * w / nw - 0.5
            x0 = int(math.floor(sx))
            fx = sx - x0
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            top = x[y0c, x0c] * (1 - fx) + x[y0c, x1c] * fx
            bot = x[y1c, x0c] * (1 - fx) + x[y1c, x1c] * fx
            out[oy, ox] = top * (1 - fy) + bot * fy
    return out.astype(np.float32)


def argmax_oracle(x):
    h, w, c = x.shape
    out = np.zeros((h, w), dtype=np.int32)
    for i in range(h):
        for j in range(w):
            best, arg = x[i, j, 0], 0
            for k in range(1, c):
                if x[i, j, k] > best:
                    best, arg = x[i, j, k], k
            out[i, j] = arg
    return out


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    assert np.array_equal(matmul(np.eye(2, dtype=np.float32), a), a)


def test_matmul_selector_row():
    got = matmul(np.array([[1.0, 0.0]], dtype=np.float32), np.array([[5.0], [7.0]], dtype=np.float32))
    assert got.shape == (1, 1) and got[0, 0] == 5.0


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.zeros((2, 3), dtype=np.float32), np.zeros((4, 2), dtype=np.float32))


def test_matmul_random_vs_oracle():
    rng = np.random.default_rng(11)
    for _ in range(30):
        m, k, n = rng.integers(1, 8, size=3)
        a = rng.normal(size=(m, k)).astype(np.float32)
        b = rng.normal(size=(k, n)).astype(np.float32)
        np.testing.assert_allclose(matmul(a, b), matmul_oracle(a, b), atol=1e-6)


def test_softmax_symmetry():
    np.testing.assert_allclose(softmax(np.zeros(3, dtype=np.float32), 0, 1.0), np.full(3, 1 / 3), atol=1e-7)


def test_softmax_saturation_no_overflow():
    got = softmax(np.array([1000.0, 0.0], dtype=np.float32), 0, 1.0)
    np.testing.assert_allclose(got, [1.0, 0.0], atol=1e-6)
    assert np.isfinite(got).all()


def test_softmax_direct_oracle():
    got = softmax(np.array([1.0, 2.0, 3.0], dtype=np.float32), 0, 1.0)
    np.testing.assert_allclose(got, softmax_oracle([1.0, 2.0, 3.0], 0, 1.0), atol=1e-7)


def test_softmax_axis_out_of_range():
    with pytest.raises(ShapeError):
        softmax(np.zeros((2, 2), dtype=np.float32), 2, 1.0)


def test_softmax_temperature_must_be_positive():
    with pytest.raises(ValueError):
        softmax(np.zeros(3, dtype=np.float32), 0, 0.0)


def test_softmax_random_vs_oracle():
    rng = np.random.default_rng(12)
    for _ in range(30):
        shape = tuple(rng.integers(1, 6, size=2))
        axis = int(rng.integers(0, 2))
        temp = float(rng.uniform(0.05, 3.0))
        x = rng.normal(scale=5.0, size=shape).astype(np.float32)
        np.testing.assert_allclose(softmax(x, axis, temp), softmax_oracle(x, axis, temp), atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False, width=32), min_size=1, max_size=16),
    st.floats(0.05, 5.0),
)
def test_softmax_rows_sum_to_one_and_shift_invariant(vals, temp):
    x = np.asarray(vals, dtype=np.float32)
    out = softmax(x, 0, temp)
    assert abs(float(out.sum()) - 1.0) < 1e-6
    shifted = softmax(x + np.float32(3.5), 0, temp)
    np.testing.assert_allclose(out, shifted, atol=1e-6)


def test_bilinear_constant_preserved():
    got = bilinear_resize(np.full((4, 4, 1), 7.0, dtype=np.float32), 8, 8)
    np.testing.assert_allclose(got, 7.0, atol=1e-6)


def test_bilinear_identity_resize():
    x = np.arange(4, dtype=np.float32).reshape(2, 2, 1)
    np.testing.assert_allclose(bilinear_resize(x, 2, 2), x, atol=1e-7)


def test_bilinear_2x2_to_4x4_oracle():
    x = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32).reshape(2, 2, 1)
    np.testing.assert_allclose(bilinear_resize(x, 4, 4), bilinear_oracle(x, 4, 4), atol=1e-6)


def test_bilinear_random_vs_oracle():
    rng = np.random.default_rng(13)
    for _ in range(20):
        h, w, c = rng.integers(1, 7, size=3)
        nh, nw = rng.integers(1, 13, size=2)
        x = rng.normal(size=(h, w, c)).astype(np.float32)
        got = bilinear_resize(x, int(nh), int(nw))
        np.testing.assert_allclose(got, bilinear_oracle(x, int(nh), int(nw)), atol=1e-5)
        assert got.min() >= x.min() - 1e-6 and got.max() <= x.max() + 1e-6


def test_argmax_single_channel_all_zero():
    assert np.array_equal(channel_argmax(np.random.default_rng(0).normal(size=(3, 3, 1)).astype(np.float32)),
                          np.zeros((3, 3), dtype=np.int32))


def test_argmax_tie_goes_low():
    x = np.full((1, 1, 2), 0.2, dtype=np.float32)
    assert channel_argmax(x)[0, 0] == 0


def test_argmax_random_vs_oracle():
    rng = np.random.default_rng(14)
    for _ in range(30):
        x = rng.normal(size=(5, 5, 4)).astype(np.float32)
        x[rng.random(size=(5, 5, 4)) < 0.2] = 0.0  # inject ties
        assert np.array_equal(channel_argmax(x), argmax_oracle(x))


def test_kernels_are_pure():
    rng = np.random.default_rng(15)
    a = rng.normal(size=(4, 5)).astype(np.float32)
    b = rng.normal(size=(5, 3)).astype(np.float32)
    assert np.array_equal(matmul(a, b), matmul(a, b))
    x = rng.normal(size=(3, 4, 2)).astype(np.float32)
    assert np.array_equal(bilinear_resize(x, 7, 9), bilinear_resize(x, 7, 9))
