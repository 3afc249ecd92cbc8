"""Bicubic, SVD, and least-squares comparison methods."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslearn.baselines import (bicubic_down_up, least_squares_probe, psnr,
                               svd_compress, svd_ratio)
from cslearn.sensing import partition, sample


def test_psnr_basics():
    ref = np.zeros((1, 4, 4), np.float32)
    assert psnr(ref, ref) == float("inf")
    est = ref + 0.1
    assert abs(psnr(ref, est) - 20.0) < 1e-6  # 10 log10(1 / 0.01)


# -- bicubic -----------------------------------------------------------


def test_bicubic_ratio_one_near_identity():
    img = np.random.RandomState(0).rand(1, 16, 16).astype(np.float32)
    out = bicubic_down_up(img, 1.0)
    assert np.abs(out - img).max() < 1e-3


def test_bicubic_constant_image_exact():
    img = np.full((2, 8, 8), 0.6, np.float32)
    np.testing.assert_allclose(bicubic_down_up(img, 0.25), 0.6, atol=1e-6)


def test_bicubic_ramp_preserves_low_frequency():
    ramp = np.tile(np.linspace(0, 1, 16, dtype=np.float32), (16, 1))[None]
    out = bicubic_down_up(ramp, 0.25)
    assert 0 < float(np.mean((out - ramp) ** 2))
    assert psnr(ramp, out) > 20.0


def test_bicubic_rejects_bad_ratio():
    img = np.zeros((1, 8, 8), np.float32)
    for r in (0.0, 1.5):
        with pytest.raises(ValueError):
            bicubic_down_up(img, r)
    with pytest.raises(ValueError):
        bicubic_down_up(np.zeros((1, 2, 2), np.float32), 0.01)


# -- SVD ---------------------------------------------------------------


def test_svd_ratio_formula_exact():
    assert svd_ratio(32, 32, 2) == (64 + 64 + 2) / 1024
    for w, h, k in ((28, 28, 5), (64, 32, 7), (16, 16, 16)):
        assert svd_ratio(w, h, k) == (w * k + h * k + k) / (w * h)


def test_svd_rank1_exact():
    u = np.outer(np.arange(1, 9, dtype=np.float64), np.arange(1, 7))
    rec = svd_compress(u, 1).rebuild()
    np.testing.assert_allclose(rec, u, atol=1e-4)


def test_svd_full_rank_exact():
    a = np.random.RandomState(1).rand(12, 9)
    rec = svd_compress(a, 9).rebuild()
    np.testing.assert_allclose(rec, a, atol=1e-4)


def test_svd_singular_values_ordered():
    a = np.random.RandomState(2).rand(10, 10)
    s = np.diag(svd_compress(a, 6).s_k)
    assert (s >= 0).all()
    assert (np.diff(s) <= 1e-12).all()


@given(st.integers(0, 50))
@settings(max_examples=20, deadline=None)
def test_svd_error_non_increasing_in_k(seed):
    a = np.random.RandomState(seed).rand(8, 8)
    errs = [float(np.linalg.norm(a - svd_compress(a, k).rebuild())) for k in range(1, 9)]
    assert all(e1 >= e2 - 1e-9 for e1, e2 in zip(errs, errs[1:]))


def test_svd_rejects_bad_rank():
    a = np.zeros((4, 6))
    for k in (0, 5):
        with pytest.raises(ValueError):
            svd_compress(a, k)


# -- least squares -----------------------------------------------------


def test_probe_full_ratio_exact_reconstruction():
    rng = np.random.RandomState(3)
    img = rng.rand(1, 8, 8).astype(np.float32)
    phi = rng.randn(16, 16).astype(np.float32)
    y = sample(partition(img, 4), phi)
    rec, score = least_squares_probe(y, phi, img)
    assert score > 60.0
    np.testing.assert_allclose(rec, img, atol=1e-3)


def test_probe_zero_measurements_give_zero_image():
    phi = np.random.RandomState(4).randn(2, 4).astype(np.float32)
    img = np.zeros((1, 4, 4), np.float32)
    y = sample(partition(img, 2), phi)
    rec, _ = least_squares_probe(y, phi)
    np.testing.assert_array_equal(rec, 0.0)


def test_probe_projection_property():
    """With the true matrix, Phi x_hat reproduces y."""
    rng = np.random.RandomState(5)
    img = rng.rand(1, 8, 8).astype(np.float32)
    phi = rng.randn(4, 16).astype(np.float32)
    y = sample(partition(img, 4), phi)
    rec, _ = least_squares_probe(y, phi)
    y2 = sample(partition(rec, 4), phi)
    np.testing.assert_allclose(y2.y.data, y.y.data, atol=1e-4)


def test_probe_rank_deficient_warns():
    img = np.random.RandomState(6).rand(1, 4, 4).astype(np.float32)
    phi = np.zeros((2, 4), np.float32)
    phi[0, 0] = phi[1, 0] = 1.0  # duplicate rows
    y = sample(partition(img, 2), phi)
    with pytest.warns(UserWarning, match="rank deficient"):
        least_squares_probe(y, phi)
