import json

import numpy as np
import pytest

from conftest import smooth_plane
from wdstfuse.errors import ConfigError, ContractError
from wdstfuse.features import random_network, save_weights
from wdstfuse.imgcore import ColorImage
from wdstfuse.lse import make_lse_network, save_lse
from wdstfuse.metrics import image_psnr
from wdstfuse.pipeline import (
    REPORT_SCHEMA,
    FusionConfig,
    FusionReport,
    ablation_fuse,
    feature_network,
    fuse,
    load_config,
    pd_curve,
    pd_interpolate,
    resolve_threads,
    substitution_experiment,
    write_pd_csv,
)
from wdstfuse.wavelet import iswt2, replace_ll, swt2
from wdstfuse.wdst import StyleTransferConfig


def color(rng, size=16):
    return ColorImage(np.stack([smooth_plane(rng, (size, size), 1.0) for _ in range(3)]))


def quick(**kw):
    return FusionConfig(wdst=StyleTransferConfig(max_iters_per_level=(5,)), **kw)


class TestConfig:
    def test_defaults(self):
        cfg = FusionConfig()
        assert cfg.wavelet_name == "bior2.2" and cfg.levels == 2
        assert cfg.channel_mode == "luma" and cfg.lse_weights is None

    def test_empty_file_gives_defaults(self, tmp_path):
        (tmp_path / "c.json").write_text("{}")
        assert load_config(tmp_path / "c.json") == FusionConfig()

    def test_round_trip(self):
        cfg = FusionConfig(levels=3, wdst=StyleTransferConfig(beta=5.0))
        again = FusionConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    @pytest.mark.parametrize(
        "data",
        [{"levels": 0}, {"wavelet_name": "sym4"}, {"channel_mode": "hsv"}, {"colour": 1},
         {"wdst": {"alpha": -1}}, {"wdst": {"nope": 1}}, {"lse_train": {"batch_size": 0}}],
    )
    def test_invalid(self, data):
        with pytest.raises(ConfigError):
            FusionConfig.from_dict(data)

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(tmp_path / "c.json")
        (tmp_path / "d.json").write_text("[]")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "d.json")

    def test_env_threads(self, monkeypatch):
        monkeypatch.delenv("WDST_THREADS", raising=False)
        assert resolve_threads(3) == 3
        monkeypatch.setenv("WDST_THREADS", "2")
        assert resolve_threads(8) == 2
        monkeypatch.setenv("WDST_THREADS", "x")
        with pytest.raises(ConfigError):
            resolve_threads(1)

    def test_feature_network_spec(self, tmp_path):
        net = feature_network("random:4:0.1")
        assert np.abs(net.conv_layers()[0].weight).max() <= 0.1
        save_weights(random_network(4), tmp_path / "w.bin")
        assert feature_network(str(tmp_path / "w.bin")).tags == net.tags
        for bad in ("random:x", str(tmp_path / "missing.bin")):
            with pytest.raises(ConfigError):
                feature_network(bad)


class TestFuse:
    def test_identity(self, rng):
        x = color(rng)
        cfg = FusionConfig(wdst=StyleTransferConfig(beta=0, gamma=0))
        for mode in ("luma", "rgb"):
            out, _ = fuse(x, x, FusionConfig(wdst=cfg.wdst, channel_mode=mode))
            assert np.max(np.abs(out.planes - x.planes)) < 1e-6

    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_trace_count(self, rng, levels):
        _, report = fuse(color(rng), color(rng), quick(levels=levels))
        traces = report.subband_traces
        assert len(traces) == 3 * levels
        assert {(t["orientation"], t["level"]) for t in traces} == {
            (o, l) for o in ("LH", "HL", "HH") for l in range(1, levels + 1)
        }

    def test_report_layout(self, rng):
        out, report = fuse(color(rng), color(rng), quick(), a_gt=color(rng))
        stages = [r["stage"] for r in report.records]
        assert stages[0] == "config" and stages[-1] == "timing"
        for name in ("swt", "lse", "iswt", "metrics"):
            assert stages.count(name) == 1
        assert all(r["schema"] == REPORT_SCHEMA for r in report.records)
        assert "no LSE weights" in report.stages("lse")[0]["note"]
        labels = [r["image"] for r in report.stages("metrics")[0]["rows"]]
        assert labels == ["A_o", "A_p", "A_r"]
        lines = report.to_jsonl().splitlines()
        assert len(lines) == len(report.records)
        assert all(json.loads(line)["schema"] == REPORT_SCHEMA for line in lines)
        assert np.all(np.isfinite(out.planes))

    def test_rgb_mode_runs_per_channel(self, rng):
        _, report = fuse(color(rng), color(rng), quick(channel_mode="rgb", levels=1))
        assert len(report.subband_traces) == 9
        assert {t["channel"] for t in report.subband_traces} == {"R", "G", "B"}

    def test_luma_keeps_content_chroma(self, rng):
        from wdstfuse.imgcore import rgb_to_ycbcr

        a_o, a_p = color(rng), color(rng)
        out, _ = fuse(a_o, a_p, quick())
        assert np.allclose(rgb_to_ycbcr(out).planes[1:], rgb_to_ycbcr(a_o).planes[1:], atol=1e-12)

    def test_parallel_matches_serial(self, rng):
        a_o, a_p = color(rng), color(rng)
        serial, _ = fuse(a_o, a_p, quick())
        parallel, rep = fuse(a_o, a_p, quick(parallel_subbands=True, threads=4))
        assert np.array_equal(serial.planes, parallel.planes)
        assert rep.stages("config")[0]["threads"] == 4

    def test_lse_weights_applied(self, rng, tmp_path):
        save_lse(make_lse_network(), tmp_path / "lse.bin")
        a_o, a_p = color(rng), color(rng)
        base, _ = fuse(a_o, a_p, quick())
        out, report = fuse(a_o, a_p, quick(lse_weights=str(tmp_path / "lse.bin")))
        assert report.stages("lse")[0]["note"] == "enhanced"
        assert np.allclose(base.planes, out.planes, atol=1e-12)  # zero net is the identity

    def test_errors_before_optimisation(self, rng):
        calls = []
        a, b = color(rng), color(rng, 32)
        with pytest.raises(ConfigError, match="size"):
            fuse(a, b, quick(), on_iteration=calls.append)
        with pytest.raises(ConfigError, match="LSE weight"):
            fuse(a, a, quick(lse_weights="/nonexistent.bin"), on_iteration=calls.append)
        with pytest.raises(ConfigError, match="unknown layer tag"):
            fuse(a, a, FusionConfig(wdst=StyleTransferConfig(content_tag="x")), on_iteration=calls.append)
        with pytest.raises(ConfigError, match="orientations"):
            fuse(a, a, quick(), skip=["LL"], on_iteration=calls.append)
        assert calls == []

    def test_on_iteration_stream(self, rng):
        seen = []
        _, report = fuse(color(rng), color(rng), quick(levels=1), on_iteration=seen.append)
        assert len(seen) == sum(len(t["trace"]) for t in report.subband_traces)
        assert {"channel", "orientation", "level", "iteration", "loss"} <= set(seen[0])

    def test_write(self, rng, tmp_path):
        _, report = fuse(color(rng), color(rng), quick(levels=1))
        report.write(tmp_path / "r.jsonl")
        assert (tmp_path / "r.jsonl").read_text() == report.to_jsonl()


class TestAblation:
    def test_skip_all_returns_content(self, rng):
        a_o = color(rng)
        out, report = ablation_fuse(a_o, color(rng), quick(), skip=["LH", "HL", "HH"])
        assert np.max(np.abs(out.planes - a_o.planes)) < 1e-6
        assert report.subband_traces == [] and len(report.stages("bypass")) == 6

    def test_skip_hh(self, rng):
        _, report = ablation_fuse(color(rng), color(rng), quick(), skip=["hh"])
        assert len(report.subband_traces) == 4
        assert all(t["orientation"] != "HH" for t in report.subband_traces)

    def test_empty_skip_equals_fuse(self, rng):
        a_o, a_p = color(rng), color(rng)
        assert np.array_equal(ablation_fuse(a_o, a_p, quick())[0].planes, fuse(a_o, a_p, quick())[0].planes)


class TestSubstitution:
    def test_same_inputs(self, rng):
        x = color(rng)
        images, _ = substitution_experiment(x, x, x)
        for key in ("~A_p", "~A_o"):
            assert np.max(np.abs(images[key].planes - x.planes)) < 1e-10

    def test_structured_ll_perturbation_improves_psnr(self, rng):
        gt = color(rng, 32)
        from wdstfuse.imgcore import rgb_to_ycbcr, ycbcr_to_rgb

        ycc = rgb_to_ycbcr(gt)
        pyr = swt2(ycc.planes[0], "bior2.2", 2)
        noisy = pyr.ll + 0.3 * smooth_plane(rng, (32, 32), 3.0)
        a_p = ycbcr_to_rgb(ycc.with_plane(0, iswt2(replace_ll(pyr, noisy))))
        images, report = substitution_experiment(gt, a_p, gt)
        rows = {r["image"]: r for r in report.stages("substitution")[0]["rows"]}
        assert rows["~A_p"]["psnr"] > rows["A_p"]["psnr"] + 1.0
        assert list(rows) == ["A_p", "~A_p", "A_o", "~A_o"]
        assert set(rows["A_p"]) == {"image", "psnr", "ssim", "hist_distance", "perceptual"}

    def test_scores_hook(self, rng):
        x = color(rng)
        _, report = substitution_experiment(x, x, x, scores={"A_p": 7.5})
        rows = {r["image"]: r for r in report.stages("substitution")[0]["rows"]}
        assert rows["A_p"]["perceptual"] == 7.5 and rows["A_o"]["perceptual"] is None

    def test_size_mismatch(self, rng):
        with pytest.raises(ContractError):
            substitution_experiment(color(rng), color(rng, 32), color(rng))


class TestInterpolation:
    def test_endpoints_exact(self, rng):
        a, b = color(rng), color(rng)
        assert pd_interpolate(a, b, 0.0) is a
        assert np.array_equal(pd_interpolate(a, b, 1.0).planes, b.planes)

    def test_midpoint(self):
        a = ColorImage(np.zeros((3, 2, 2)))
        b = ColorImage(np.ones((3, 2, 2)))
        assert np.all(pd_interpolate(a, b, 0.5).planes == 0.5)

    @pytest.mark.parametrize("mu", [-0.1, 1.5])
    def test_out_of_range(self, rng, mu):
        with pytest.raises(ContractError):
            pd_interpolate(color(rng), color(rng), mu)

    def test_curve(self, rng, tmp_path):
        gt = color(rng)
        a_o = ColorImage(np.clip(gt.planes + 0.01, 0, 1))
        a_p = ColorImage(np.clip(gt.planes + 0.2 * rng.standard_normal(gt.planes.shape), 0, 1))
        rows = pd_curve(a_o, a_p, gt, [0, 0.5, 1])
        assert [r["mu"] for r in rows] == [0.0, 0.5, 1.0]
        assert rows[0]["psnr"] == pytest.approx(image_psnr(a_o, gt))
        assert rows[2]["psnr"] == pytest.approx(image_psnr(a_p, gt))
        assert rows[0]["psnr"] > rows[2]["psnr"]
        write_pd_csv(rows, tmp_path / "pd.csv")
        lines = (tmp_path / "pd.csv").read_text().splitlines()
        assert lines[0] == "mu,psnr,ssim,hist_distance" and len(lines) == 4


class TestReport:
    def test_non_finite_becomes_null(self):
        r = FusionReport()
        r.add("x", value=float("nan"), arr=(np.float64(1.5),))
        assert json.loads(r.to_jsonl()) == {"schema": REPORT_SCHEMA, "stage": "x", "value": None, "arr": [1.5]}


class TestHistogramDirection:
    @pytest.mark.parametrize("seed", [1, 2])
    def test_output_detail_statistics_move_toward_style(self, seed):
        from scipy.ndimage import gaussian_filter

        from wdstfuse.metrics import highfreq_distance, metric_planes

        rng = np.random.default_rng(seed)
        base = gaussian_filter(rng.random((64, 64)), 2, mode="wrap")
        base = (base - base.min()) / (base.max() - base.min())
        gt = np.clip(base + 0.15 * rng.standard_normal((64, 64)), 0, 1)
        a_o = ColorImage.from_gray(gaussian_filter(gt, 0.5, mode="wrap"))
        a_p = ColorImage.from_gray(np.clip(base + 0.15 * rng.standard_normal((64, 64)), 0, 1))
        out, _ = fuse(a_o, a_p, FusionConfig(), max_iters=50)

        def pyr(im):
            return swt2(metric_planes(im)[0], "bior2.2", 2)

        assert highfreq_distance(pyr(out), pyr(a_p)) < highfreq_distance(pyr(a_o), pyr(a_p))
