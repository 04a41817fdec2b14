"""Figures written next to the CLI's delimited reports."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import subband_histogram  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 6.0

params = {
    "axes.labelsize": 9,
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 120,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _new(nrows=1, ncols=1, height=None):
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots(nrows, ncols, figsize=(fig_width, height or fig_width * golden_mean),
                               squeeze=False)
    return fig, ax


def _save(fig, path):
    with matplotlib.rc_context(params):
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)


def plot_pd_curve(rows, path, fused=None):
    """PSNR against the histogram-distance proxy along the mu path.

    ``fused`` is an optional ``(psnr, hist_distance)`` point for the fused image.
    """
    fig, ax = _new()
    ax = ax[0, 0]
    d = [r["hist_distance"] for r in rows]
    p = [r["psnr"] for r in rows]
    ax.plot(d, p, "o-", color="#2b8cbe", label="interpolation")
    for r in rows:
        ax.annotate(f"{r['mu']:g}", (r["hist_distance"], r["psnr"]), fontsize=6,
                    textcoords="offset points", xytext=(3, 3))
    if fused is not None:
        ax.plot([fused[1]], [fused[0]], "*", color="#e34a33", markersize=9, label="fused")
    ax.set_xlabel("sub-band histogram distance to ground truth (lower is closer)")
    ax.set_ylabel("PSNR [dB]")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_subband_histograms(pyramids, path, bins=64):
    """Overlay detail sub-band histograms of several pyramids.

    ``pyramids`` maps a label to a pyramid; the first one sets each panel's range.
    """
    labels = list(pyramids)
    ref = pyramids[labels[0]]
    bands = list(ref.subbands())
    ncols = 3
    nrows = (len(bands) + ncols - 1) // ncols
    fig, axes = _new(nrows, ncols, height=2.0 * nrows)
    for k, (name, level, band) in enumerate(bands):
        ax = axes[k // ncols, k % ncols]
        m = max(float(np.abs(band).max()), 1e-12)
        for label in labels:
            other = dict(((n, l), b) for n, l, b in pyramids[label].subbands())[(name, level)]
            h = subband_histogram(other, bins, (-m, m))
            centers = 0.5 * (h.bin_edges[:-1] + h.bin_edges[1:])
            ax.plot(centers, h.normalized(), label=label)
        ax.set_yscale("log")
        ax.set_title(f"{name}{level}")
    for k in range(len(bands), nrows * ncols):
        axes[k // ncols, k % ncols].axis("off")
    axes[0, 0].legend(frameon=False)
    _save(fig, path)


def plot_traces(report, path):
    """Loss against iteration for every WDST run in ``report``."""
    fig, ax = _new()
    ax = ax[0, 0]
    for rec in report.subband_traces:
        it = [t["iteration"] for t in rec["trace"]]
        loss = [t["loss"] for t in rec["trace"]]
        ax.semilogy(it, loss, label=f"{rec['channel']} {rec['orientation']}{rec['level']}")
    ax.set_xlabel("L-BFGS iteration")
    ax.set_ylabel("total loss")
    ax.legend(frameon=False, ncol=2)
    _save(fig, path)


def plot_substitution(rows, path):
    """Bar charts of PSNR and histogram distance for the four substitution images."""
    fig, axes = _new(1, 2)
    labels = [r["image"] for r in rows]
    x = np.arange(len(labels))
    axes[0, 0].bar(x, [r["psnr"] for r in rows], color="#4eb3d3")
    axes[0, 0].set_ylabel("PSNR [dB]")
    axes[0, 1].bar(x, [r["hist_distance"] for r in rows], color="#08589e")
    axes[0, 1].set_ylabel("histogram distance")
    for ax in axes[0]:
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
    _save(fig, path)


def plot_loss_history(history, path):
    fig, ax = _new()
    ax = ax[0, 0]
    ax.plot(range(len(history)), history, "o-")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    _save(fig, path)
