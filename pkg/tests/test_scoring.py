import numpy as np
import pytest

from wepadim import ConfigError
from wepadim.pgm import read_pgm, write_pgm
from wepadim.scoring import (
    AnomalyResult,
    export_heatmap,
    gaussian_blur,
    gaussian_kernel,
    postprocess,
)

import oracles


def test_kernel_normalized_and_sized():
    for sigma in (0.4, 1.0, 2.0, 6.0):
        k = gaussian_kernel(sigma)
        assert abs(k.sum() - 1.0) < 1e-12
        assert k.size == 2 * int(np.ceil(4 * sigma)) + 1
        assert np.array_equal(k, k[::-1])


def test_blur_constant_preserved():
    c = np.full((9, 7), 3.25)
    assert np.abs(gaussian_blur(c, 2.0) - 3.25).max() < 1e-12


def test_blur_impulse_matches_direct_convolution_oracle():
    m = np.zeros((41, 41))
    m[20, 20] = 1.0
    ours = gaussian_blur(m, 2.0)
    ref = oracles.blur2d_direct(m, gaussian_kernel(2.0))
    assert np.abs(ours - ref).max() < 1e-10
    assert abs(ours[20, 20] - gaussian_kernel(2.0).max() ** 2) < 1e-12


def test_blur_mass_conserved_for_interior_mass():
    rng = np.random.default_rng(0)
    m = np.zeros((40, 40))
    m[15:25, 15:25] = rng.random((10, 10))
    out = gaussian_blur(m, 1.5)  # radius 6: support stays interior
    assert abs(out.sum() - m.sum()) < 1e-8
    ref = oracles.blur2d_direct(m, gaussian_kernel(1.5))
    assert np.abs(out - ref).max() < 1e-10


def test_blur_tiny_sigma_approximates_identity():
    m = np.zeros((9, 9))
    m[4, 4] = 1.0
    out = gaussian_blur(m, 0.1)
    assert out[4, 4] > 1.0 - 1e-10


def test_blur_flip_symmetry():
    rng = np.random.default_rng(1)
    m = rng.random((12, 17))
    a = gaussian_blur(m[::-1, ::-1].copy(), 2.5)
    b = gaussian_blur(m, 2.5)[::-1, ::-1]
    assert np.abs(a - b).max() < 1e-12


def test_blur_nonnegative():
    rng = np.random.default_rng(2)
    out = gaussian_blur(rng.random((16, 16)), 3.0)
    assert (out >= 0).all()


def test_postprocess_constant_map():
    res = postprocess(np.full((4, 4), 2.5), (16, 16), sigma=2.0, image_id="c")
    assert np.abs(res.full_map - 2.5).max() < 1e-12
    assert abs(res.image_score - 2.5) < 1e-12


def test_postprocess_zero_map():
    res = postprocess(np.zeros((4, 4)), (8, 8), sigma=1.0)
    assert np.abs(res.full_map).max() == 0.0
    assert res.image_score == 0.0


def test_postprocess_scaling_linearity():
    rng = np.random.default_rng(3)
    raw = rng.random((6, 6))
    r1 = postprocess(raw, (24, 24), sigma=2.0)
    r2 = postprocess(3.0 * raw, (24, 24), sigma=2.0)
    assert np.abs(r2.full_map - 3.0 * r1.full_map).max() < 1e-10
    assert abs(r2.image_score - 3.0 * r1.image_score) < 1e-10


def test_postprocess_sigma_zero_skips_blur():
    rng = np.random.default_rng(4)
    raw = rng.random((5, 5))
    res = postprocess(raw, (10, 10), sigma=0.0)
    from wepadim.embed import bilinear_resize

    assert np.array_equal(res.full_map, bilinear_resize(raw[None], (10, 10))[0])


def test_postprocess_rejects_shrinking():
    with pytest.raises(ConfigError):
        postprocess(np.zeros((8, 8)), (4, 4), sigma=1.0)


def test_export_per_image_constant_is_all_zero(tmp_path):
    res = AnomalyResult("x", np.zeros((2, 2)), np.full((4, 4), 7.0), 7.0)
    path = tmp_path / "x.pgm"
    export_heatmap(res, path)
    values, maxval = read_pgm(path)
    assert maxval == 65535
    assert values.max() == 0


def test_export_fixed_range_quantization(tmp_path):
    full = np.array([[0.0, 1.0], [2.0, 3.0]])
    res = AnomalyResult("q", full, full, 3.0)
    path = tmp_path / "q.pgm"
    export_heatmap(res, path, normalization="fixed-range", fixed_range=(0.0, 3.0))
    values, _ = read_pgm(path)
    assert values.tolist() == [[0, 21845], [43690, 65535]]


def test_export_round_trip_exact(tmp_path):
    rng = np.random.default_rng(5)
    full = rng.random((8, 9))
    res = AnomalyResult("r", full, full, float(full.max()))
    path = tmp_path / "r.pgm"
    export_heatmap(res, path)
    values, _ = read_pgm(path)
    lo, hi = full.min(), full.max()
    expected = np.clip(np.rint((full - lo) / (hi - lo) * 65535), 0, 65535)
    assert np.array_equal(values, expected.astype(np.uint16))


def test_pgm_8bit_round_trip(tmp_path):
    mask = (np.arange(12).reshape(3, 4) * 20).astype(np.uint8)
    write_pgm(mask, tmp_path / "m.pgm", maxval=255)
    values, maxval = read_pgm(tmp_path / "m.pgm")
    assert maxval == 255
    assert np.array_equal(values, mask)


def test_pgm_16bit_is_big_endian(tmp_path):
    write_pgm(np.array([[0x0102]], dtype=np.uint16), tmp_path / "be.pgm",
              maxval=65535)
    raw = (tmp_path / "be.pgm").read_bytes()
    assert raw.endswith(b"\x01\x02")
