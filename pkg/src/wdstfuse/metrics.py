"""Distortion metrics and sub-band histogram statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError
from .imgcore import ColorImage, ColorSpace, as_plane, rgb_to_ycbcr

__all__ = [
    "Histogram",
    "mse",
    "psnr",
    "ssim",
    "subband_histogram",
    "histogram_distance",
    "highfreq_distance",
    "image_psnr",
    "image_ssim",
    "metric_planes",
    "write_histogram_csv",
]

PSNR_CAP = 99.0


def _pair(a, b):
    a = as_plane(a, "a")
    b = as_plane(b, "b")
    if a.shape != b.shape:
        raise ContractError(f"planes differ in shape: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0, cap: float = PSNR_CAP) -> float:
    """Peak signal-to-noise ratio in dB; ``cap`` is returned for identical planes."""
    if not peak > 0:
        raise ContractError(f"peak must be positive, got {peak}")
    err = mse(a, b)
    if err == 0:
        return cap
    return min(cap, 10.0 * math.log10(peak**2 / err))


def _gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def _filter_valid(img, win):
    half = len(win) // 2
    out = correlate1d(img, win, axis=0, mode="constant")
    out = correlate1d(out, win, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a, b, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03,
         win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean structural similarity with an ``11x11`` Gaussian window (sigma 1.5)."""
    a, b = _pair(a, b)
    if min(a.shape) < win_size:
        raise ContractError(f"SSIM needs images of at least {win_size}x{win_size}, got {a.shape}")
    win = _gaussian_window(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a**2
    sbb = _filter_valid(b * b, win) - mu_b**2
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def metric_planes(image: ColorImage, channel: str = "y"):
    """Planes on which image-level metrics are computed (``y`` or ``rgb``)."""
    if channel == "y":
        img = image if image.space is ColorSpace.YCBCR else rgb_to_ycbcr(image)
        return [img.planes[0]]
    if channel == "rgb":
        if image.space is not ColorSpace.RGB:
            from .imgcore import ycbcr_to_rgb

            image = ycbcr_to_rgb(image)
        return list(image.planes)
    raise ContractError(f"channel must be 'y' or 'rgb', got {channel!r}")


def image_psnr(a: ColorImage, b: ColorImage, channel="y", peak=1.0) -> float:
    """PSNR on Y, or on the mean squared error over the RGB channels."""
    pa, pb = metric_planes(a, channel), metric_planes(b, channel)
    err = float(np.mean([mse(x, y) for x, y in zip(pa, pb)]))
    return PSNR_CAP if err == 0 else min(PSNR_CAP, 10.0 * math.log10(peak**2 / err))


def image_ssim(a: ColorImage, b: ColorImage, channel="y") -> float:
    pa, pb = metric_planes(a, channel), metric_planes(b, channel)
    return float(np.mean([ssim(x, y) for x, y in zip(pa, pb)]))


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int

    def normalized(self) -> np.ndarray:
        return self.counts / self.total if self.total else np.zeros(len(self.counts))


def subband_histogram(s, bins: int, value_range) -> Histogram:
    """Uniform-bin histogram; out-of-range values land in the end bins."""
    if int(bins) != bins or bins < 1:
        raise ContractError(f"bins must be a positive integer, got {bins}")
    lo, hi = (float(v) for v in value_range)
    if not hi > lo:
        raise ContractError(f"histogram range must satisfy lo < hi, got ({lo}, {hi})")
    s = as_plane(s, "sub-band")
    counts, edges = np.histogram(np.clip(s, lo, hi), bins=int(bins), range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64), int(s.size))


def histogram_distance(h1: Histogram, h2: Histogram) -> float:
    """Chi-squared distance ``sum (p - q)^2 / (p + q)`` of normalised counts."""
    if len(h1.bin_edges) != len(h2.bin_edges) or not np.allclose(h1.bin_edges, h2.bin_edges, rtol=0, atol=1e-12):
        raise ContractError("histograms use different binning")
    p, q = h1.normalized(), h2.normalized()
    s = p + q
    mask = s > 0
    return float(np.sum((p[mask] - q[mask]) ** 2 / s[mask]))


def highfreq_distance(pyr, ref, bins: int = 64) -> float:
    """Mean histogram distance of ``pyr``'s detail sub-bands to those of ``ref``.

    Each sub-band is binned over the symmetric range ``[-m, m]`` with ``m``
    the largest magnitude in the reference band, so distances of several
    pyramids to one reference are directly comparable.
    """
    dists = []
    for (_, _, a), (_, _, b) in zip(pyr.subbands(), ref.subbands()):
        m = max(float(np.abs(b).max()), 1e-12)
        dists.append(histogram_distance(subband_histogram(a, bins, (-m, m)),
                                        subband_histogram(b, bins, (-m, m))))
    return float(np.mean(dists))


def write_histogram_csv(hist: Histogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
