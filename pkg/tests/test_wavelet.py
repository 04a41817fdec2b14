import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import naive_swt_level1
from wdstfuse.errors import ConfigError, ContractError
from wdstfuse.filters import SUPPORTED_FILTERS, make_filter_pair
from wdstfuse.wavelet import ORIENTATIONS, dump_pyramid, iswt2, min_size, replace_ll, swt2


class TestFilters:
    def test_seven_families(self):
        assert set(SUPPORTED_FILTERS) == {"haar", "db2", "db4", "bior2.2", "bior4.4", "rbio2.2", "coif2"}

    @pytest.mark.parametrize("name", SUPPORTED_FILTERS)
    def test_perfect_reconstruction_identity(self, name):
        h0, g0, h1, g1 = make_filter_pair(name).arrays()
        assert len(h0) == len(g0) == len(h1) == len(g1)
        total = np.convolve(h0, h1) + np.convolve(g0, g1)
        delta = np.zeros_like(total)
        delta[len(h0) - 1] = 2.0
        assert np.max(np.abs(total - delta)) < 1e-10

    @pytest.mark.parametrize("name", SUPPORTED_FILTERS)
    def test_lowpass_dc_gain(self, name):
        h0, g0, _, _ = make_filter_pair(name).arrays()
        assert h0.sum() == pytest.approx(np.sqrt(2), abs=1e-11)
        assert g0.sum() == pytest.approx(0.0, abs=1e-11)

    def test_unknown_name_lists_supported(self):
        with pytest.raises(ConfigError, match="bior2.2"):
            make_filter_pair("sym5")


class TestSwt:
    def test_subband_count_and_shapes(self, rng):
        x = rng.random((16, 12))
        pyr = swt2(x, "db2", 3)
        assert len(pyr) == 10
        assert pyr.levels == 3
        assert all(b.shape == x.shape for _, _, b in pyr.subbands())
        assert [(n, l) for n, l, _ in pyr.subbands()][:3] == [("LH", 1), ("HL", 1), ("HH", 1)]

    @pytest.mark.parametrize("name", SUPPORTED_FILTERS)
    def test_level1_matches_direct_convolution(self, name, rng):
        x = rng.random((8, 8))
        filt = make_filter_pair(name)
        pyr = swt2(x, filt, 1)
        for got, want in zip([pyr.ll, *pyr.details[0]], naive_swt_level1(x, filt)):
            assert np.max(np.abs(got - want)) < 1e-12

    @pytest.mark.parametrize("name", SUPPORTED_FILTERS)
    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_perfect_reconstruction(self, name, levels, rng):
        x = rng.random((24, 17)) * 255
        assert np.max(np.abs(iswt2(swt2(x, name, levels)) - x)) < 1e-9

    def test_constant_image_has_zero_details(self):
        pyr = swt2(np.full((16, 16), 0.3), "bior4.4", 2)
        for _, _, band in pyr.subbands():
            assert np.max(np.abs(band)) < 1e-11
        assert np.allclose(pyr.ll, 0.3 * 2.0 ** 2)

    def test_constant_haar_level1(self):
        pyr = swt2(np.full((8, 8), 0.7), "haar", 1)
        assert np.allclose(pyr.ll, 1.4, atol=1e-15)
        assert all(np.max(np.abs(b)) < 1e-15 for _, _, b in pyr.subbands())

    def test_default_pyramid_size(self, rng):
        pyr = swt2(rng.random((64, 64)), "bior2.2", 2)
        assert len(pyr) == 7 and all(b.shape == (64, 64) for _, _, b in pyr.subbands())

    def test_orientation_convention(self):
        # a pattern varying along y only has energy in LH (highpass along y)
        y = np.sin(np.linspace(0, 2 * np.pi, 16, endpoint=False) * 4)
        x = np.repeat(y[:, None], 16, axis=1)
        lh, hl, hh = swt2(x, "haar", 1).details[0]
        assert np.abs(lh).max() > 0.1
        assert np.abs(hl).max() < 1e-14 and np.abs(hh).max() < 1e-14

    @settings(max_examples=30, deadline=None)
    @given(dy=st.integers(-20, 20), dx=st.integers(-20, 20), name=st.sampled_from(SUPPORTED_FILTERS),
           seed=st.integers(0, 2**16))
    def test_shift_invariance_bitwise(self, dy, dx, name, seed):
        x = np.random.default_rng(seed).random((16, 16))
        a = swt2(np.roll(x, (dy, dx), axis=(0, 1)), name, 2)
        b = swt2(x, name, 2)
        assert np.array_equal(a.ll, np.roll(b.ll, (dy, dx), axis=(0, 1)))
        for (_, _, p), (_, _, q) in zip(a.subbands(), b.subbands()):
            assert np.array_equal(p, np.roll(q, (dy, dx), axis=(0, 1)))

    def test_linearity(self, rng):
        x, y = rng.random((16, 16)), rng.random((16, 16))
        a, b = swt2(x, "db4", 2), swt2(y, "db4", 2)
        c = swt2(2 * x - 3 * y, "db4", 2)
        comb = a.combine(b, 2.0, -3.0)
        assert np.allclose(c.ll, comb.ll, atol=1e-12)
        for (_, _, p), (_, _, q) in zip(c.subbands(), comb.subbands()):
            assert np.allclose(p, q, atol=1e-12)

    def test_minimum_size(self):
        assert min_size(3) == 8
        swt2(np.zeros((8, 8)), "coif2", 3)
        with pytest.raises(ContractError, match="minimum side is 8"):
            swt2(np.zeros((7, 8)), "coif2", 3)

    @pytest.mark.parametrize("levels", [0, -1, 1.5])
    def test_bad_levels(self, levels):
        with pytest.raises(ContractError):
            swt2(np.zeros((16, 16)), "haar", levels)

    def test_rejects_nan(self):
        x = np.zeros((8, 8))
        x[2, 2] = np.nan
        with pytest.raises(ContractError, match="non-finite"):
            swt2(x, "haar", 1)

    def test_unknown_filter(self):
        with pytest.raises(ConfigError):
            swt2(np.zeros((8, 8)), "nope", 1)


class TestPyramidOps:
    def test_replace_ll(self, rng):
        pyr = swt2(rng.random((16, 16)), "bior2.2", 2)
        new = replace_ll(pyr, np.zeros((16, 16)))
        assert np.all(new.ll == 0)
        assert new.details[0][0] is pyr.details[0][0]
        with pytest.raises(ContractError):
            replace_ll(pyr, np.zeros((8, 8)))

    def test_with_detail(self, rng):
        pyr = swt2(rng.random((16, 16)), "haar", 2)
        new = pyr.with_detail(2, "hl", np.ones((16, 16)))
        assert np.all(new.details[1][1] == 1)
        assert np.all(pyr.details[1][1] != 1)
        with pytest.raises(ContractError):
            pyr.with_detail(1, "LH", np.ones((4, 4)))

    def test_iswt_rejects_mismatched_band(self, rng):
        pyr = swt2(rng.random((16, 16)), "haar", 1)
        pyr.details[0] = (pyr.details[0][0], np.zeros((4, 4)), pyr.details[0][2])
        with pytest.raises(ContractError):
            iswt2(pyr)

    def test_dc_offset_lives_in_ll_only(self, rng):
        x = rng.random((16, 16))
        a, b = swt2(x, "bior2.2", 2), swt2(x + 0.25, "bior2.2", 2)
        for (_, _, p), (_, _, q) in zip(a.subbands(), b.subbands()):
            assert np.max(np.abs(p - q)) < 1e-14

    def test_dump(self, tmp_path, rng):
        pyr = swt2(rng.random((16, 16)), "bior2.2", 2)
        written = dump_pyramid(pyr, tmp_path / "d")
        names = sorted(p.name for p in written)
        assert names == sorted(["LL2.pgm"] + [f"{o}{l}.pgm" for l in (1, 2) for o in ORIENTATIONS])
        lines = (tmp_path / "d" / "scales.txt").read_text().splitlines()
        assert lines[0] == "# filter=bior2.2 levels=2"
        assert len(lines) == 2 + 7
        raw = (tmp_path / "d" / "LH1.pgm").read_bytes()
        assert raw.startswith(b"P5\n16 16\n255\n")
