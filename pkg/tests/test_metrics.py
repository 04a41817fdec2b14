import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wdstfuse.errors import ContractError
from wdstfuse.imgcore import ColorImage, rgb_to_ycbcr
from wdstfuse.metrics import (
    PSNR_CAP,
    histogram_distance,
    highfreq_distance,
    image_psnr,
    image_ssim,
    metric_planes,
    mse,
    psnr,
    ssim,
    subband_histogram,
    write_histogram_csv,
)
from wdstfuse.wavelet import swt2


class TestPsnr:
    def test_constant_error_closed_form(self):
        a = np.zeros((8, 8))
        assert psnr(a, a + 1, peak=255) == pytest.approx(20 * np.log10(255), abs=1e-12)
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)

    def test_identical_is_capped(self, rng):
        a = rng.random((4, 4))
        assert psnr(a, a) == PSNR_CAP

    def test_errors(self):
        with pytest.raises(ContractError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ContractError):
            psnr(np.zeros((2, 2)), np.ones((2, 2)), peak=0)

    def test_mse(self):
        assert mse([[0, 0]], [[1, 3]]) == 5.0


class TestSsim:
    def test_identity(self, rng):
        a = rng.random((20, 20))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_matches_scikit_image(self, rng):
        metrics = pytest.importorskip("skimage.metrics")
        a = rng.random((32, 30))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        ref = metrics.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                            use_sample_covariance=False)
        assert ssim(a, b) == pytest.approx(ref, abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**16), c=st.floats(0.05, 0.3))
    def test_joint_shift_keeps_structure_terms(self, seed, c):
        # adding one constant to both images leaves the contrast/structure
        # factor unchanged, and SSIM stays below 1 for distinct images
        rng = np.random.default_rng(seed)
        a = rng.random((16, 16)) * 0.5
        b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 0.6)
        s0, s1 = ssim(a, b), ssim(a + c, b + c)
        assert s0 < 1 and s1 < 1
        assert abs(s1 - s0) < 0.05

    def test_symmetric(self, rng):
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)

    def test_too_small(self):
        with pytest.raises(ContractError, match="11x11"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestImageMetrics:
    def test_y_channel(self, rng):
        img = ColorImage(rng.random((3, 12, 12)))
        y = metric_planes(img)[0]
        assert np.allclose(y, rgb_to_ycbcr(img).planes[0])
        assert np.array_equal(metric_planes(rgb_to_ycbcr(img))[0], rgb_to_ycbcr(img).planes[0])

    def test_rgb_mean_mse(self, rng):
        a = ColorImage(np.zeros((3, 4, 4)))
        b = ColorImage(np.stack([np.full((4, 4), v) for v in (0.1, 0.2, 0.3)]))
        expected = 10 * np.log10(1 / np.mean([0.01, 0.04, 0.09]))
        assert image_psnr(a, b, "rgb") == pytest.approx(expected, abs=1e-10)
        assert image_ssim(ColorImage(rng.random((3, 12, 12))), ColorImage(rng.random((3, 12, 12))), "rgb") < 1

    def test_bad_channel(self, rng):
        with pytest.raises(ContractError):
            metric_planes(ColorImage(rng.random((3, 2, 2))), "lab")


class TestHistograms:
    def test_counts_and_clipping(self):
        h = subband_histogram(np.array([[-5.0, 0.0, 0.4, 5.0]]), 2, (-1, 1))
        assert h.counts.tolist() == [1, 3] and h.total == 4
        assert h.normalized().sum() == pytest.approx(1.0)

    def test_constant_plane_single_bin(self):
        h = subband_histogram(np.full((4, 4), 0.3), 8, (0, 1))
        assert np.count_nonzero(h.counts) == 1 and h.counts.max() == 16

    def test_reflection_mirrors(self, rng):
        s = rng.standard_normal((8, 8))
        a, b = subband_histogram(s, 10, (-2, 2)), subband_histogram(-s, 10, (-2, 2))
        assert np.array_equal(a.counts, b.counts[::-1])

    def test_bad_args(self):
        with pytest.raises(ContractError):
            subband_histogram(np.zeros((2, 2)), 0, (0, 1))
        with pytest.raises(ContractError):
            subband_histogram(np.zeros((2, 2)), 4, (1, 1))

    def test_distance_properties(self, rng):
        a, b = rng.standard_normal((16, 16)), rng.standard_normal((16, 16)) * 2
        ha, hb = subband_histogram(a, 16, (-3, 3)), subband_histogram(b, 16, (-3, 3))
        assert histogram_distance(ha, ha) == 0
        d = histogram_distance(ha, hb)
        assert d > 0 and d == pytest.approx(histogram_distance(hb, ha))
        assert d <= 2.0

    def test_binning_mismatch(self, rng):
        a = rng.random((4, 4))
        with pytest.raises(ContractError, match="binning"):
            histogram_distance(subband_histogram(a, 4, (0, 1)), subband_histogram(a, 8, (0, 1)))

    def test_highfreq_distance(self, rng):
        x = rng.random((16, 16))
        pyr = swt2(x, "bior2.2", 2)
        assert highfreq_distance(pyr, pyr) == 0
        smooth = swt2(np.full((16, 16), 0.5), "bior2.2", 2)
        assert highfreq_distance(smooth, pyr) > 0.5

    def test_csv(self, tmp_path):
        h = subband_histogram(np.array([[0.1, 0.9]]), 2, (0, 1))
        write_histogram_csv(h, tmp_path / "h.csv")
        rows = list(csv.reader(open(tmp_path / "h.csv")))
        assert rows[0] == ["bin_lo", "bin_hi", "count"]
        assert [r[2] for r in rows[1:]] == ["1", "1"]
