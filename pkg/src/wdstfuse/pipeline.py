"""End-to-end fusion of a distortion-oriented and a perception-oriented image.

``fuse`` decomposes both images with the stationary wavelet transform,
optionally sharpens the low-frequency band of the distortion-oriented image
with the LSE network, restyles every detail band with WDST and synthesises
the result.  The experimental protocols (LL substitution, pixel
interpolation curve, per-orientation ablation) live here too.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .features import FeatureNetwork, load_weights, random_network
from .imgcore import ColorImage, ColorSpace, rgb_to_ycbcr, ycbcr_to_rgb
from .lse import TrainConfig, lse_forward, load_lse
from .metrics import highfreq_distance, image_psnr, image_ssim, metric_planes
from .wavelet import ORIENTATIONS, SUPPORTED_FILTERS, iswt2, make_filter_pair, replace_ll, swt2
from .wdst import StyleTransferConfig, run_transfer

log = logging.getLogger(__name__)

__all__ = [
    "FusionConfig",
    "FusionReport",
    "REPORT_SCHEMA",
    "load_config",
    "resolve_threads",
    "fuse",
    "ablation_fuse",
    "substitution_experiment",
    "pd_interpolate",
    "pd_curve",
    "write_pd_csv",
]

REPORT_SCHEMA = "wdstfuse.report/1"


@dataclass
class FusionConfig:
    wavelet_name: str = "bior2.2"
    levels: int = 2
    wdst: StyleTransferConfig = field(default_factory=StyleTransferConfig)
    lse_weights: str | None = None
    # a weight file path, or "random:<seed>[:<scale>]"
    feature_weights: str = "random:0"
    channel_mode: str = "luma"
    parallel_subbands: bool = False
    threads: int = 1
    metric_channel: str = "y"
    hist_bins: int = 64
    lse_train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.wavelet_name not in SUPPORTED_FILTERS:
            make_filter_pair(self.wavelet_name)  # raises with the supported list
        if int(self.levels) != self.levels or self.levels < 1:
            raise ConfigError(f"levels must be a positive integer, got {self.levels}")
        if self.channel_mode not in ("luma", "rgb"):
            raise ConfigError(f"channel_mode must be 'luma' or 'rgb', got {self.channel_mode!r}")
        if self.metric_channel not in ("y", "rgb"):
            raise ConfigError(f"metric_channel must be 'y' or 'rgb', got {self.metric_channel!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "FusionConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if "wdst" in data:
                data["wdst"] = StyleTransferConfig(**data["wdst"])
            if "lse_train" in data:
                data["lse_train"] = TrainConfig(**data["lse_train"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["wdst"] = self.wdst.to_dict()
        d["lse_train"] = dict(vars(self.lse_train))
        return d


def load_config(path) -> FusionConfig:
    """Read a JSON config; an empty object yields the default experimental setup."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return FusionConfig.from_dict(data)


def resolve_threads(requested: int | None) -> int:
    """``WDST_THREADS`` wins over an explicit request."""
    env = os.environ.get("WDST_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"WDST_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("WDST_THREADS must be at least 1")
        return n
    return max(1, int(requested or 1))


def feature_network(spec: str) -> FeatureNetwork:
    if spec.startswith("random:"):
        parts = spec.split(":")[1:]
        try:
            seed = int(parts[0])
            scale = float(parts[1]) if len(parts) > 1 else 0.3
        except (ValueError, IndexError):
            raise ConfigError(f"bad random network spec {spec!r}; use random:<seed>[:<scale>]") from None
        return random_network(seed, scale)
    if not Path(spec).is_file():
        raise ConfigError(f"feature weight file not found: {spec}")
    return load_weights(spec)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class FusionReport:
    """Ordered JSON-lines records, one per executed stage."""

    records: list = field(default_factory=list)

    def add(self, stage, **payload):
        rec = {"schema": REPORT_SCHEMA, "stage": stage}
        rec.update(payload)
        self.records.append(rec)
        return rec

    def stages(self, name):
        return [r for r in self.records if r["stage"] == name]

    @property
    def subband_traces(self):
        return self.stages("wdst")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_jsonable(r), allow_nan=False) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


# ---------------------------------------------------------------------------
# Channel handling
# ---------------------------------------------------------------------------

def _working_planes(image: ColorImage, mode):
    if mode == "luma":
        ycc = image if image.space is ColorSpace.YCBCR else rgb_to_ycbcr(image)
        return ycc, [0]
    rgb = image if image.space is ColorSpace.RGB else ycbcr_to_rgb(image)
    return rgb, [0, 1, 2]


def _assemble(base: ColorImage, processed: dict) -> ColorImage:
    planes = base.planes.copy()
    for idx, plane in processed.items():
        planes[idx] = plane
    out = ColorImage(planes, base.space)
    return ycbcr_to_rgb(out) if out.space is ColorSpace.YCBCR else out


_CHANNEL_NAMES = {"luma": ("Y",), "rgb": ("R", "G", "B")}


def _check_same_size(*images):
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ConfigError(f"input images differ in size: {sorted(shapes)}")


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def fuse(a_o: ColorImage, a_p: ColorImage, cfg: FusionConfig = None, skip=(), a_gt: ColorImage = None,
         scores: dict = None, max_iters: int | None = None, on_iteration=None):
    """Fuse ``a_o`` (content) and ``a_p`` (style) into one image.

    Parameters
    ----------
    skip : iterable of str
        Orientations (``LH``, ``HL``, ``HH``) whose sub-bands bypass WDST and
        keep ``a_o``'s coefficients at every level.
    a_gt : ColorImage, optional
        Ground truth for the metric table.
    scores : dict, optional
        Externally computed perceptual scores keyed by image label.
    max_iters : int, optional
        Overrides the per-level iteration caps.
    on_iteration : callable, optional
        Called with every optimiser trace record (used for live tracing).

    Returns
    -------
    (ColorImage, FusionReport)
    """
    cfg = cfg or FusionConfig()
    skip = {s.upper() for s in skip}
    bad = skip - set(ORIENTATIONS)
    if bad:
        raise ConfigError(f"unknown orientations in skip: {', '.join(sorted(bad))}")
    _check_same_size(a_o, a_p, *([a_gt] if a_gt is not None else []))
    # resolve every external resource before any optimisation starts
    net = feature_network(cfg.feature_weights)
    lse_net = None
    if cfg.lse_weights:
        if not Path(cfg.lse_weights).is_file():
            raise ConfigError(f"LSE weight file not found: {cfg.lse_weights}")
        lse_net = load_lse(cfg.lse_weights)
    for tag in [cfg.wdst.content_tag, *cfg.wdst.style_tags]:
        try:
            net.index_of(tag)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
    filt = make_filter_pair(cfg.wavelet_name)
    threads = resolve_threads(cfg.threads)

    report = FusionReport()
    report.add("config", config=_jsonable(cfg.to_dict()), skip=sorted(skip), threads=threads)
    base_o, idxs = _working_planes(a_o, cfg.channel_mode)
    base_p, _ = _working_planes(a_p, cfg.channel_mode)
    names = _CHANNEL_NAMES[cfg.channel_mode]
    timings = {}
    processed = {}
    for idx in idxs:
        ch = names[idx]
        t0 = time.perf_counter()
        pyr_o = swt2(base_o.planes[idx], filt, cfg.levels)
        pyr_p = swt2(base_p.planes[idx], filt, cfg.levels)
        timings[f"swt/{ch}"] = time.perf_counter() - t0
        report.add("swt", channel=ch, filter=filt.name, levels=cfg.levels, subbands=len(pyr_o),
                   seconds=timings[f"swt/{ch}"])

        t0 = time.perf_counter()
        if lse_net is not None:
            ll = lse_forward(lse_net, pyr_o.ll)
            note = "enhanced"
        else:
            ll = pyr_o.ll
            note = "passthrough: no LSE weights configured"
        timings[f"lse/{ch}"] = time.perf_counter() - t0
        report.add("lse", channel=ch, note=note, seconds=timings[f"lse/{ch}"])

        jobs = [(orient, level, band_o, band_p)
                for (orient, level, band_o), (_, _, band_p) in zip(pyr_o.subbands(), pyr_p.subbands())
                if orient not in skip]

        def run(job, _ch=ch):
            orient, level, content, style = job
            cb = None
            if on_iteration is not None:
                def cb(rec, _o=orient, _l=level):
                    on_iteration(dict(channel=_ch, orientation=_o, level=_l, **rec))
            t = time.perf_counter()
            res = run_transfer(content, style, net, cfg.wdst, level=level, max_iters=max_iters, callback=cb)
            return res, time.perf_counter() - t

        t0 = time.perf_counter()
        if cfg.parallel_subbands and threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(job) for job in jobs]
        timings[f"wdst/{ch}"] = time.perf_counter() - t0

        fused = pyr_o
        for (orient, level, _, _), (res, secs) in zip(jobs, results):
            fused = fused.with_detail(level, orient, res.plane)
            report.add("wdst", channel=ch, orientation=orient, level=level, status=res.status,
                       warning=res.warning, iterations=res.iterations, final_loss=res.final_loss,
                       content_range=list(res.content_range), seconds=secs, trace=res.trace)
        for orient in sorted(skip):
            for level in range(1, cfg.levels + 1):
                report.add("bypass", channel=ch, orientation=orient, level=level)
        fused = replace_ll(fused, ll)

        t0 = time.perf_counter()
        processed[idx] = iswt2(fused)
        timings[f"iswt/{ch}"] = time.perf_counter() - t0
        report.add("iswt", channel=ch, seconds=timings[f"iswt/{ch}"])

    out = _assemble(base_o, processed)
    if a_gt is not None:
        rows = [_metric_row(label, img, a_gt, cfg, scores)
                for label, img in (("A_o", a_o), ("A_p", a_p), ("A_r", out))]
        report.add("metrics", reference="A_gt", channel=cfg.metric_channel, rows=rows)
    report.add("timing", seconds=timings, total=float(sum(timings.values())))
    return out, report


def ablation_fuse(a_o, a_p, cfg=None, skip=(), **kwargs):
    """:func:`fuse` with the given orientations passed through untouched."""
    return fuse(a_o, a_p, cfg, skip=skip, **kwargs)


def _metric_row(label, image, gt, cfg, scores=None):
    filt = make_filter_pair(cfg.wavelet_name)
    y_img = metric_planes(image, "y")[0]
    y_gt = metric_planes(gt, "y")[0]
    dist = highfreq_distance(swt2(y_img, filt, cfg.levels), swt2(y_gt, filt, cfg.levels), cfg.hist_bins)
    return {
        "image": label,
        "psnr": image_psnr(image, gt, cfg.metric_channel),
        "ssim": image_ssim(image, gt, cfg.metric_channel),
        "hist_distance": dist,
        "perceptual": None if not scores else scores.get(label),
    }


# ---------------------------------------------------------------------------
# Experimental protocols
# ---------------------------------------------------------------------------

def substitution_experiment(a_o: ColorImage, a_p: ColorImage, a_gt: ColorImage, cfg: FusionConfig = None,
                            scores: dict = None):
    """Swap the LL bands of ``a_o`` and ``a_p`` and measure all four images.

    Returns ``(images, report)`` where ``images`` maps ``A_p``, ``~A_p``,
    ``A_o``, ``~A_o`` to :class:`ColorImage`.  ``~A_p`` keeps ``a_p``'s detail
    bands with ``a_o``'s LL; ``~A_o`` is the converse.
    """
    cfg = cfg or FusionConfig()
    try:
        _check_same_size(a_o, a_p, a_gt)
    except ConfigError as exc:
        raise ContractError(str(exc)) from exc
    filt = make_filter_pair(cfg.wavelet_name)
    base_o, idxs = _working_planes(a_o, cfg.channel_mode)
    base_p, _ = _working_planes(a_p, cfg.channel_mode)
    tilde_p, tilde_o = {}, {}
    for idx in idxs:
        pyr_o = swt2(base_o.planes[idx], filt, cfg.levels)
        pyr_p = swt2(base_p.planes[idx], filt, cfg.levels)
        tilde_p[idx] = iswt2(replace_ll(pyr_p, pyr_o.ll))
        tilde_o[idx] = iswt2(replace_ll(pyr_o, pyr_p.ll))
    images = {
        "A_p": a_p,
        "~A_p": _assemble(base_p, tilde_p),
        "A_o": a_o,
        "~A_o": _assemble(base_o, tilde_o),
    }
    report = FusionReport()
    report.add("config", config=_jsonable(cfg.to_dict()))
    rows = [_metric_row(label, img, a_gt, cfg, scores) for label, img in images.items()]
    report.add("substitution", reference="A_gt", channel=cfg.metric_channel, rows=rows)
    return images, report


def pd_interpolate(a_o: ColorImage, a_p: ColorImage, mu: float) -> ColorImage:
    """Pixel-wise ``mu * a_p + (1 - mu) * a_o``."""
    if not 0.0 <= mu <= 1.0:
        raise ContractError(f"mu must lie in [0, 1], got {mu}")
    try:
        _check_same_size(a_o, a_p)
    except ConfigError as exc:
        raise ContractError(str(exc)) from exc
    if a_o.space is not a_p.space:
        raise ContractError("both images must share a colour space")
    if mu == 0.0:
        return a_o
    if mu == 1.0:
        return a_p
    return ColorImage(mu * a_p.planes + (1.0 - mu) * a_o.planes, a_o.space)


def pd_curve(a_o, a_p, a_gt, mu_list, cfg: FusionConfig = None):
    """Rows of ``(mu, psnr, ssim, hist_distance)`` along the interpolation path.

    ``hist_distance`` is the sub-band histogram proxy for perceptual quality
    (lower means closer detail statistics to the ground truth).
    """
    cfg = cfg or FusionConfig()
    rows = []
    for mu in mu_list:
        r = _metric_row(f"mu={mu}", pd_interpolate(a_o, a_p, float(mu)), a_gt, cfg)
        rows.append({"mu": float(mu), "psnr": r["psnr"], "ssim": r["ssim"], "hist_distance": r["hist_distance"]})
    return rows


def write_pd_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["mu", "psnr", "ssim", "hist_distance"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})
