import math

import numpy as np
import pytest

from skullmatch.errors import ArgumentError
from skullmatch.features import (
    DsiftConfig,
    FeatureConfig,
    HogConfig,
    LbpConfig,
    apply_stats,
    batch_extract,
    dsift_length,
    extract_dsift,
    extract_hog,
    extract_lbp,
    extract_pixels,
    feature_stats,
    gradients,
    hog_length,
    lbp_codes,
    lbp_length,
)


def pixel_orientation_hist(img, bins, period):
    # independent reference: per-pixel gradient orientation histogram using
    # plain loops, clamped central differences, linear circular binning
    H, W = img.shape
    hist = np.zeros(bins)
    for y in range(H):
        for x in range(W):
            xm, xp = max(x - 1, 0), min(x + 1, W - 1)
            ym, yp = max(y - 1, 0), min(y + 1, H - 1)
            gx = (img[y, xp] - img[y, xm]) / 2.0
            gy = (img[yp, x] - img[ym, x]) / 2.0
            m = math.hypot(gx, gy)
            if m == 0.0:
                continue
            t = (math.atan2(gy, gx) % period) * (bins / period)
            k0 = int(t) % bins
            f = t - int(t)
            hist[k0] += m * (1.0 - f)
            hist[(k0 + 1) % bins] += m * f
    return hist


def step_edge(n=64):
    img = np.zeros((n, n))
    img[:, n // 2:] = 1.0
    return img


def diagonal_edge(n=64):
    y, x = np.mgrid[0:n, 0:n]
    return (x - y > 0).astype(np.float64)


class TestPixels:
    def test_flattening_order(self):
        img = np.array([[0.0, 0.5], [1.0, 0.25]])
        assert np.array_equal(extract_pixels(img), [0.0, 0.5, 1.0, 0.25])

    def test_constant(self):
        v = extract_pixels(np.full((64, 64), 0.3))
        assert v.shape == (4096,)
        assert np.all(v == 0.3)

    def test_pure(self):
        img = np.random.default_rng(0).random((16, 16))
        assert np.array_equal(extract_pixels(img), extract_pixels(img))

    def test_out_of_range_rejected(self):
        with pytest.raises(ArgumentError):
            extract_pixels(np.full((4, 4), 1.5))


class TestGradients:
    def test_interior_central_difference(self):
        img = np.zeros((5, 5))
        img[2, 3] = 0.8
        gy, gx = gradients(img)
        assert gx[2, 2] == pytest.approx(0.4)
        assert gx[2, 4] == pytest.approx(-0.4)
        assert gy[1, 3] == pytest.approx(0.4)

    def test_replicate_border(self):
        img = np.array([[0.0, 1.0, 1.0]] * 3)
        gy, gx = gradients(img)
        # left edge: (I[., 1] - I[., 0]) / 2 under edge padding
        assert gx[0, 0] == pytest.approx(0.5)
        assert np.all(gy == 0.0)


class TestHog:
    def test_length_default(self):
        img = np.random.default_rng(1).random((64, 64))
        d = extract_hog(img)
        assert d.shape == (1764,)
        assert d.shape[0] == hog_length(HogConfig(), (64, 64))

    def test_constant_is_zero(self):
        assert np.all(extract_hog(np.full((64, 64), 0.7)) == 0.0)

    def test_step_edge_mass_concentrated(self):
        img = step_edge()
        d = extract_hog(img)
        by_bin = d.reshape(-1, 9).sum(axis=0)
        oracle = pixel_orientation_hist(img, 9, math.pi)
        assert int(np.argmax(by_bin)) == int(np.argmax(oracle))
        assert by_bin[np.argmax(oracle)] / by_bin.sum() >= 0.90

    def test_oracle_agreement_on_diagonal(self):
        img = diagonal_edge()
        d = extract_hog(img)
        by_bin = d.reshape(-1, 9).sum(axis=0)
        oracle = pixel_orientation_hist(img, 9, math.pi)
        # unsigned 135-degree orientation splits between two adjacent bins;
        # block normalization must not move the dominant one
        assert int(np.argmax(by_bin)) == int(np.argmax(oracle))
        top2 = np.sort(by_bin)[-2:].sum()
        assert top2 / by_bin.sum() >= 0.90

    def test_flip_preserves_norm(self):
        img = np.random.default_rng(4).random((64, 64))
        n1 = np.linalg.norm(extract_hog(img))
        n2 = np.linalg.norm(extract_hog(img[:, ::-1]))
        assert abs(n1 - n2) <= 1e-9

    def test_blocks_unit_norm(self):
        img = np.random.default_rng(5).random((64, 64))
        d = extract_hog(img).reshape(-1, 36)
        norms = np.linalg.norm(d, axis=1)
        assert np.all(norms <= 1.0 + 1e-9)
        assert np.all(norms >= 0.99)

    def test_too_small_rejected(self):
        with pytest.raises(ArgumentError):
            extract_hog(np.zeros((15, 64)))


class TestLbp:
    def test_length_default(self):
        img = np.random.default_rng(6).random((64, 64))
        d = extract_lbp(img)
        assert d.shape == (16384,)
        assert d.shape[0] == lbp_length(LbpConfig())

    def test_constant_indicator(self):
        h = extract_lbp(np.full((64, 64), 0.3)).reshape(-1, 256)
        assert np.all(h[:, 255] == 1.0)
        assert np.all(h[:, :255] == 0.0)

    def test_hand_computed_code(self):
        # center 0.5; cardinal neighbors right 0.8, down 0.9, left 0.6, up 0.2;
        # interpolated diagonals (counting from +x toward +y) come out
        # 0.545, 0.404, 0.209, 0.450; bits fire for >= 0.5: k = 0, 1, 2, 4
        img = np.array([
            [0.0, 0.2, 0.4],
            [0.6, 0.5, 0.8],
            [0.1, 0.9, 0.3],
        ])
        assert lbp_codes(img)[1, 1] == 1 + 2 + 4 + 16

    def test_white_pixel_on_black(self):
        img = np.zeros((7, 7))
        img[3, 3] = 1.0
        codes = lbp_codes(img)
        # white center sees only smaller neighbors; far pixels see equals
        assert codes[3, 3] == 0
        assert codes[0, 0] == 255

    def test_cell_histograms_sum_to_one(self):
        img = np.random.default_rng(7).random((64, 64))
        sums = extract_lbp(img).reshape(-1, 256).sum(axis=1)
        assert np.all(np.abs(sums - 1.0) <= 1e-9)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(ArgumentError):
            extract_lbp(np.zeros((4, 4)), LbpConfig(grid=8))


class TestDsift:
    def test_length_default(self):
        img = np.random.default_rng(8).random((64, 64))
        d = extract_dsift(img)
        assert d.shape == (6272,)
        assert d.shape[0] == dsift_length(DsiftConfig(), (64, 64))

    def test_constant_is_zero(self):
        assert np.all(extract_dsift(np.full((64, 64), 0.2)) == 0.0)

    def test_diagonal_edge_orientation(self):
        img = diagonal_edge()
        d = extract_dsift(img)
        by_bin = d.reshape(-1, 8).sum(axis=0)
        oracle = pixel_orientation_hist(img, 8, 2.0 * math.pi)
        assert int(np.argmax(by_bin)) == int(np.argmax(oracle))
        assert by_bin[np.argmax(oracle)] / by_bin.sum() >= 0.90

    def test_nonnegative_descriptors(self):
        img = np.random.default_rng(9).random((64, 64))
        d = extract_dsift(img)
        assert np.all(d >= 0.0)
        norms = np.linalg.norm(d.reshape(-1, 128), axis=1)
        assert np.all(norms <= 1.0 + 1e-9)

    def test_patch_too_large_rejected(self):
        with pytest.raises(ArgumentError):
            extract_dsift(np.zeros((12, 12)), DsiftConfig(patch=16))


class TestBatchExtract:
    def test_single_image_matches_extractor(self):
        img = np.random.default_rng(10).random((64, 64))
        F = batch_extract([img], FeatureConfig(kind="hog"))
        assert F.shape == (1764, 1)
        assert np.array_equal(F[:, 0], extract_hog(img))

    def test_permutation_covariance(self):
        rng = np.random.default_rng(11)
        imgs = [rng.random((32, 32)) for _ in range(4)]
        cfg = FeatureConfig(kind="pixels")
        F = batch_extract(imgs, cfg)
        G = batch_extract(imgs[::-1], cfg)
        assert np.array_equal(G, F[:, ::-1])

    def test_standardize_zero_mean(self):
        rng = np.random.default_rng(12)
        imgs = [rng.random((32, 32)) for _ in range(6)]
        F = batch_extract(imgs, FeatureConfig(kind="pixels", standardize=True))
        assert np.abs(F.mean(axis=1)).max() <= 1e-9

    def test_training_stats_reused(self):
        rng = np.random.default_rng(13)
        train = [rng.random((16, 16)) for _ in range(5)]
        probe = [rng.random((16, 16)) for _ in range(3)]
        cfg = FeatureConfig(kind="pixels", standardize=True)
        stats = feature_stats(batch_extract(probe + train, FeatureConfig(kind="pixels"))[:, 3:])
        F_probe = batch_extract(probe, cfg, stats=stats)
        raw = batch_extract(probe, FeatureConfig(kind="pixels"))
        assert np.array_equal(F_probe, apply_stats(raw, stats))

    def test_mixed_sizes_rejected(self):
        with pytest.raises(ArgumentError):
            batch_extract([np.zeros((16, 16)), np.zeros((32, 32))],
                          FeatureConfig(kind="pixels"))

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            batch_extract([], FeatureConfig(kind="pixels"))


class TestConfigValidation:
    def test_bad_kind(self):
        with pytest.raises(ArgumentError):
            FeatureConfig(kind="gabor")

    def test_bad_hog(self):
        with pytest.raises(ArgumentError):
            HogConfig(bins=0)

    def test_bad_dsift(self):
        with pytest.raises(ArgumentError):
            DsiftConfig(patch=15, spatial_bins=4)

    def test_dimension_determinism(self):
        for shape in [(64, 64), (80, 64), (96, 96)]:
            img = np.random.default_rng(14).random(shape)
            assert extract_hog(img).shape[0] == hog_length(HogConfig(), shape)
            assert extract_dsift(img).shape[0] == dsift_length(DsiftConfig(), shape)
