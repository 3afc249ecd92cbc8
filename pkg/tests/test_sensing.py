"""Block partition / sampling / binarization / measurement container."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslearn import sensing
from cslearn.autodiff import Tensor, grad_check, square, sum_all
from cslearn.sensing import (FormatError, SamplingBaseMatrix, assemble,
                             binarize, fnv1a64, interpolate_measurements,
                             matrix_digest, orthogonality_diagnostic,
                             partition, ratio_to_m, read_measurements, sample,
                             truncate_sampling, write_measurements)


def random_image(c, h, w, seed=0):
    return np.random.RandomState(seed).rand(c, h, w).astype(np.float32)


# -- partition / assemble ----------------------------------------------


def test_partition_shapes():
    blocks = partition(random_image(1, 4, 4), 2)
    assert blocks.blocks.shape == (1, 4, 4)
    assert blocks.grid == (2, 2)
    assert blocks.length == 4


def test_partition_block_count_at_paper_scale():
    blocks = partition(np.zeros((3, 384, 384), np.float32), 16)
    assert blocks.length == 576
    assert blocks.grid == (24, 24)


def test_partition_raster_order_and_vectorization():
    img = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
    blocks = partition(img, 2)
    # first block is the top-left 2x2 patch, vectorized row-major
    np.testing.assert_array_equal(blocks.blocks.data[0, :, 0], [0, 1, 4, 5])
    np.testing.assert_array_equal(blocks.blocks.data[0, :, 1], [2, 3, 6, 7])


@given(st.sampled_from([2, 4, 8]), st.integers(1, 3), st.integers(0, 100))
@settings(max_examples=25, deadline=None)
def test_partition_assemble_round_trip(b, c, seed):
    img = random_image(c, 2 * b, 3 * b, seed)
    out = assemble(partition(img, b), b)
    assert np.array_equal(out.data, img)


def test_partition_rejects_indivisible():
    with pytest.raises(ValueError, match="divisible"):
        partition(np.zeros((1, 5, 4), np.float32), 2)


# -- ratio -------------------------------------------------------------


def test_ratio_to_m_values():
    assert ratio_to_m(1.0, 16) == 256
    assert ratio_to_m(1 / 1024, 32) == 1
    assert ratio_to_m(0.1, 16) == 26
    assert ratio_to_m(1e-9, 4) == 1  # clamped to the minimum


def test_ratio_to_m_rejects_out_of_range():
    for gamma in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            ratio_to_m(gamma, 4)


# -- truncation and prefix nesting -------------------------------------


def test_truncate_full_matrix():
    base = SamplingBaseMatrix.initialize(4)
    assert np.array_equal(truncate_sampling(base, 16).data, base.phi.data)


@given(st.integers(1, 15), st.integers(1, 16))
@settings(max_examples=50, deadline=None)
def test_truncate_prefix_nesting(m1, m2):
    m1, m2 = min(m1, m2), max(m1, m2)
    base = SamplingBaseMatrix.initialize(4, rng=np.random.RandomState(1))
    big = truncate_sampling(base, m2).data
    small = truncate_sampling(base, m1).data
    assert np.array_equal(big[:m1], small)


def test_truncate_out_of_range():
    base = SamplingBaseMatrix.initialize(4)
    for m in (0, 17):
        with pytest.raises(ValueError):
            truncate_sampling(base, m)


# -- binarization ------------------------------------------------------


def test_binarize_forward_values():
    out = binarize(np.array([-0.3, 0.0, 0.7], np.float32))
    np.testing.assert_array_equal(out.data, [-1, 1, 1])


def test_binarize_backward_clip_mask():
    a = Tensor(np.array([-2.0, 0.5, 2.0], np.float32), requires_grad=True)
    sum_all(binarize(a)).backward()
    np.testing.assert_array_equal(a.grad, [0, 1, 0])


def test_binarize_idempotent():
    x = np.random.RandomState(0).randn(8).astype(np.float32)
    once = binarize(x).data
    assert np.array_equal(binarize(once).data, once)


def test_binarize_mask_matches_definition_on_many_points():
    rng = np.random.RandomState(7)
    pts = (rng.rand(10_000).astype(np.float32) - 0.5) * 6
    a = Tensor(pts, requires_grad=True)
    sum_all(binarize(a)).backward()
    expected = ((pts >= -1) & (pts <= 1)).astype(np.float32)
    assert np.array_equal(a.grad, expected)


def test_binary_mode_effective_entries():
    base = SamplingBaseMatrix.initialize(4, mode="binary")
    eff = truncate_sampling(base, 7).data
    assert set(np.unique(eff)) <= {-1.0, 1.0}


# -- sampling ----------------------------------------------------------


def test_sample_identity_rows_pick_block_entries():
    img = random_image(1, 4, 4, 3)
    blocks = partition(img, 2)
    phi = np.eye(4, dtype=np.float32)[:2]
    y = sample(blocks, phi)
    assert np.array_equal(y.y.data[0], blocks.blocks.data[0, :2])


def test_sample_invertible_full_ratio_reconstructs():
    rng = np.random.RandomState(5)
    img = random_image(1, 8, 8, 5)
    blocks = partition(img, 4)
    phi = rng.randn(16, 16).astype(np.float32)
    y = sample(blocks, phi)
    rec = np.linalg.pinv(phi.astype(np.float64)) @ y.y.data[0]
    np.testing.assert_allclose(rec, blocks.blocks.data[0], atol=1e-4)


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_sample_linearity_superposition(seed):
    rng = np.random.RandomState(seed)
    a = random_image(1, 4, 4, seed)
    b = random_image(1, 4, 4, seed + 1)
    phi = rng.randn(3, 4).astype(np.float32)
    joint = sample(partition(a + b, 2), phi)
    split = sample(partition(a, 2), phi).y.data + sample(partition(b, 2), phi).y.data
    np.testing.assert_allclose(joint.y.data, split, atol=1e-5)


def test_sample_prefix_property():
    img = random_image(1, 8, 8, 9)
    base = SamplingBaseMatrix.initialize(4, rng=np.random.RandomState(2))
    blocks = partition(img, 4)
    y_full = sample(blocks, truncate_sampling(base, 12))
    y_small = sample(blocks, truncate_sampling(base, 5))
    assert np.array_equal(y_full.y.data[:, :5], y_small.y.data)


def test_sample_gradient_wrt_matrix():
    img = random_image(1, 4, 4, 11)
    phi = Tensor(np.random.RandomState(1).randn(2, 4).astype(np.float32), requires_grad=True)

    def f():
        return sum_all(square(sample(partition(img, 2), phi).y))

    assert grad_check(f, [phi]) < 1e-4


def test_sample_shape_mismatch():
    with pytest.raises(ValueError):
        sample(partition(random_image(1, 4, 4), 2), np.zeros((2, 9), np.float32))


# -- interpolation -----------------------------------------------------


def test_interpolate_identity_grid():
    y = sample(partition(random_image(1, 8, 8, 1), 2), np.eye(4, dtype=np.float32)[:2])
    out = interpolate_measurements(y, (4, 4))
    assert np.array_equal(out.y.data, y.y.data)


def test_interpolate_constant_map_stays_constant():
    y = sensing.MeasurementSequence(Tensor(np.full((1, 2, 4), 3.5, np.float32)),
                                    2, 2, (2, 2), 1)
    out = interpolate_measurements(y, (3, 3))
    np.testing.assert_allclose(out.y.data, 3.5, atol=1e-6)
    assert out.m == 2 and out.grid == (3, 3) and out.length == 9


def test_interpolate_2x2_to_4x4_half_pixel_weights():
    y = sensing.MeasurementSequence(
        Tensor(np.array([[0.0, 1.0, 2.0, 3.0]], np.float32)[None]), 1, 2, (2, 2), 1)
    out = interpolate_measurements(y, (4, 4)).y.data[0, 0].reshape(4, 4)
    # rows blend [0,1] and [2,3] with half-pixel weights 1, .75/.25, .25/.75, 1
    np.testing.assert_allclose(out[0], [0, 0.25, 0.75, 1.0], atol=1e-6)
    np.testing.assert_allclose(out[3], [2, 2.25, 2.75, 3.0], atol=1e-6)
    np.testing.assert_allclose(out[:, 0], [0, 0.5, 1.5, 2.0], atol=1e-6)


def test_interpolate_rejects_bad_grid():
    y = sensing.MeasurementSequence(Tensor(np.zeros((1, 1, 4), np.float32)), 1, 2, (2, 2), 1)
    with pytest.raises(ValueError):
        interpolate_measurements(y, (0, 3))


# -- diagnostics -------------------------------------------------------


def test_orthogonality_orthonormal_rows():
    lam, off = orthogonality_diagnostic(np.eye(4, dtype=np.float32)[:3])
    assert abs(lam - 1.0) < 1e-6 and off < 1e-6


def test_orthogonality_binary_matrix_diagonal():
    base = SamplingBaseMatrix.initialize(4, mode="binary")
    lam, _ = orthogonality_diagnostic(truncate_sampling(base, 16).data)
    assert abs(lam - 16.0) < 1e-5


def test_orthogonality_random_gaussian_off_diag_small():
    worst = 0.0
    for seed in range(100):
        phi = np.random.RandomState(seed).normal(0, 1 / 16, size=(26, 256))
        _, off = orthogonality_diagnostic(phi)
        worst = max(worst, off)
    assert worst < 0.5


# -- digest and container ----------------------------------------------


def test_fnv1a64_known_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_measurement_container_round_trip(tmp_path):
    img = random_image(3, 8, 8, 13)
    base = SamplingBaseMatrix.initialize(2, rng=np.random.RandomState(3))
    y = sample(partition(img, 2), truncate_sampling(base, 3))
    path = tmp_path / "y.tclm"
    write_measurements(path, y)
    back = read_measurements(path)
    assert np.array_equal(back.y.data, y.y.data)
    assert (back.m, back.block_size, back.grid, back.channels) == (3, 2, (4, 4), 3)
    assert back.matrix_digest == y.matrix_digest == matrix_digest(truncate_sampling(base, 3))
    # byte-identical re-serialization
    write_measurements(tmp_path / "y2.tclm", back)
    assert (tmp_path / "y.tclm").read_bytes() == (tmp_path / "y2.tclm").read_bytes()


def test_measurement_container_bad_magic(tmp_path):
    path = tmp_path / "bad.tclm"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FormatError, match="magic"):
        read_measurements(path)


def test_measurement_container_truncated_payload(tmp_path):
    img = random_image(1, 4, 4, 1)
    y = sample(partition(img, 2), np.eye(4, dtype=np.float32)[:2])
    path = tmp_path / "y.tclm"
    write_measurements(path, y)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError, match="payload"):
        read_measurements(path)
