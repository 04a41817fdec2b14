"""Low-frequency sub-band enhancement: a 6-layer residual CNN and its trainer.

The network predicts a residual that is added to the input LL band; with all
weights zero it is the identity.  Training is plain mini-batch SGD with
momentum on the summed per-image l2 norm of the error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import ContractError, TrainingDiverged
from .features import (
    FeatureNetwork,
    LayerKind,
    LayerSpec,
    _im2col,
    conv2d,
    conv2d_backward,
    load_weights,
    save_weights,
)
from .imgcore import as_plane
from .wavelet import swt2

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "make_lse_network",
    "check_lse_network",
    "lse_forward",
    "lse_loss",
    "lse_train",
    "load_lse",
    "save_lse",
    "synthetic_deblur_dataset",
    "ll_training_pairs",
]

N_LAYERS = 6


def make_lse_network(width: int = 64, seed: int | None = None, n_layers: int = N_LAYERS) -> FeatureNetwork:
    """Build the residual stack; zero weights unless ``seed`` is given.

    With a seed the kernels get He-style uniform init (bound
    ``sqrt(6 / fan_in)``) and zero biases.
    """
    rng = None if seed is None else np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        cin = 1 if i == 0 else width
        cout = 1 if i == n_layers - 1 else width
        if rng is None:
            w = np.zeros((cout, cin, 3, 3))
        else:
            bound = math.sqrt(6.0 / (cin * 9))
            w = rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(np.float32).astype(np.float64)
        layers.append(LayerSpec(LayerKind.CONV, f"conv{i + 1}", w, np.zeros(cout)))
        if i < n_layers - 1:
            layers.append(LayerSpec(LayerKind.RELU, f"relu{i + 1}"))
    return FeatureNetwork(layers, input_channels=1)


def check_lse_network(net: FeatureNetwork) -> FeatureNetwork:
    """Validate the conv/ReLU alternation and single-channel ends."""
    kinds = [layer.kind for layer in net.layers]
    n_conv = kinds.count(LayerKind.CONV)
    expected = []
    for i in range(n_conv):
        expected.append(LayerKind.CONV)
        if i < n_conv - 1:
            expected.append(LayerKind.RELU)
    if kinds != expected or net.input_channels != 1 or net.output_channels != 1:
        raise ContractError("LSE network must alternate conv/ReLU, end in a conv and map 1 -> 1 channels")
    return net


def _residual(net, x, keep_cols=False):
    """Run the conv stack on a ``(1, B, H, W)`` batch; returns output and caches."""
    caches = []
    h = x
    for layer in net.layers:
        if layer.kind is LayerKind.CONV:
            cols = _im2col(h) if keep_cols else None
            caches.append((h, cols))
            h = conv2d(h, layer.weight, layer.bias, cols)
        else:
            caches.append(h > 0)
            h = np.maximum(h, 0.0)
    return h, caches


def lse_forward(net: FeatureNetwork, ll) -> np.ndarray:
    """Enhanced LL band: ``ll + R(ll)``."""
    ll = as_plane(ll, "LL")
    r, _ = _residual(net, ll[None, None])
    return ll + r[0, 0]


def _stack(planes):
    arr = np.asarray(planes, dtype=np.float64)
    return arr[None] if arr.ndim == 2 else arr


def lse_loss(pred, gt, squared: bool = False) -> float:
    """Sum over images of ``||gt_i - pred_i||_2`` (or its square).

    ``pred`` and ``gt`` are a single plane or a stack of planes.
    """
    p, g = _stack(pred), _stack(gt)
    if p.shape != g.shape:
        raise ContractError(f"prediction {p.shape} and target {g.shape} differ in shape")
    sq = np.sum((g - p) ** 2, axis=(1, 2))
    return float(sq.sum() if squared else np.sqrt(sq).sum())


def _loss_and_grads(net, x, y, squared):
    """Batch loss (summed per-image) and parameter gradients of the mean loss."""
    r, caches = _residual(net, x, keep_cols=True)
    diff = x + r - y
    sq = np.sum(diff**2, axis=(0, 2, 3))
    if squared:
        per = sq
        g = 2.0 * diff
    else:
        per = np.sqrt(sq)
        safe = np.where(per > 0, per, 1.0)
        g = np.where(per[None, :, None, None] > 0, diff / safe[None, :, None, None], 0.0)
    g = g / x.shape[1]
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.kind is LayerKind.CONV:
            h_in, cols = caches[i]
            caches[i] = None
            g, gw, gb = conv2d_backward(g, h_in, layer.weight, cols, need_params=True)
            grads[i] = (gw, gb)
        else:
            g = g * caches[i]
    return float(per.sum()), grads


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 10
    seed: int = 0
    squared: bool = False
    # global l2-norm gradient clipping, as in VDSR; None disables it
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ContractError("batch_size and epochs must be positive")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ContractError("momentum must lie in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ContractError("clip_norm must be positive or None")


@dataclass
class TrainResult:
    net: FeatureNetwork
    history: list = field(default_factory=list)  # history[0] is before any update


def _dataset_loss(net, xs, ys, squared, chunk=64):
    total = 0.0
    n = xs.shape[1]
    for start in range(0, n, chunk):
        x = xs[:, start : start + chunk]
        r, _ = _residual(net, x)
        total += lse_loss((x + r)[0], ys[0, start : start + chunk], squared)
    return total / n


def lse_train(net: FeatureNetwork, dataset, cfg: TrainConfig = TrainConfig(), log_every=None) -> TrainResult:
    """Train ``net`` in place-free fashion and return the new net plus loss history.

    ``dataset`` is a sequence of ``(ll_in, ll_gt)`` plane pairs.  The
    returned ``history[k]`` is the dataset-mean loss after ``k`` epochs.
    """
    if len(dataset) == 0:
        raise ContractError("training dataset is empty")
    shape = np.shape(dataset[0][0])
    for a, b in dataset:
        if np.shape(a) != shape or np.shape(b) != shape:
            raise ContractError("all training pairs must share one plane shape")
    check_lse_network(net)
    xs = np.asarray([p[0] for p in dataset], dtype=np.float64)[None]
    ys = np.asarray([p[1] for p in dataset], dtype=np.float64)[None]
    layers = [LayerSpec(l.kind, l.tag,
                        None if l.weight is None else l.weight.copy(),
                        None if l.bias is None else l.bias.copy())
              for l in net.layers]
    net = FeatureNetwork(layers, input_channels=1)
    velocity = {i: (np.zeros_like(l.weight), np.zeros_like(l.bias))
                for i, l in enumerate(net.layers) if l.kind is LayerKind.CONV}
    rng = np.random.default_rng(cfg.seed)
    history = [_dataset_loss(net, xs, ys, cfg.squared)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(xs.shape[1])
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = _loss_and_grads(net, xs[:, idx], ys[:, idx], cfg.squared)
            scale = 1.0
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float(np.sum(gw**2) + np.sum(gb**2)) for gw, gb in filter(None, grads)))
                if norm > cfg.clip_norm:
                    scale = cfg.clip_norm / norm
            for i, (vw, vb) in velocity.items():
                gw, gb = grads[i]
                gw, gb = gw * scale, gb * scale
                vw *= cfg.momentum
                vw -= cfg.learning_rate * gw
                vb *= cfg.momentum
                vb -= cfg.learning_rate * gb
                net.layers[i].weight += vw
                net.layers[i].bias += vb
        loss = _dataset_loss(net, xs, ys, cfg.squared)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite in epoch {epoch}")
        history.append(loss)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d: mean loss %.6g", epoch, loss)
    return TrainResult(net, history)


def save_lse(net: FeatureNetwork, path) -> None:
    save_weights(check_lse_network(net), path)


def load_lse(path) -> FeatureNetwork:
    return check_lse_network(load_weights(path))


# ---------------------------------------------------------------------------
# Training data
# ---------------------------------------------------------------------------

def _texture(rng, size):
    """Random piecewise-smooth test pattern in [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(4):
        fx, fy = rng.uniform(1, 6, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    for _ in range(3):
        cx, cy, rad = rng.uniform(0, 1, size=3)
        img += rng.uniform(-1, 1) * (((xx - cx) ** 2 + (yy - cy) ** 2) < (0.1 + 0.3 * rad) ** 2)
    img -= img.min()
    return img / max(img.max(), 1e-12)


def synthetic_deblur_dataset(n: int = 200, size: int = 32, sigma: float = 1.5, seed: int = 0):
    """``n`` seeded pairs ``(blurred, sharp)`` of ``size x size`` patches."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        gt = _texture(rng, size)
        pairs.append((gaussian_filter(gt, sigma, mode="wrap"), gt))
    return pairs


def _bicubic_degrade(plane, scale):
    h, w = plane.shape
    im = Image.fromarray(plane.astype(np.float32), mode="F")
    small = im.resize((max(1, w // scale), max(1, h // scale)), Image.BICUBIC)
    return np.asarray(small.resize((w, h), Image.BICUBIC), dtype=np.float64)


def ll_training_pairs(clean_planes, filt="bior2.2", levels=2, patch=32, stride=32, scale=2,
                      degraded_planes=None):
    """Cut ``(LL^o, LL^gt)`` patch pairs from clean images.

    ``LL^gt`` comes from the clean plane, ``LL^o`` from ``degraded_planes``
    when given (e.g. outputs of a distortion-oriented SR method) or else
    from a bicubic down/up-scaled copy.
    """
    pairs = []
    for k, clean in enumerate(clean_planes):
        clean = as_plane(clean)
        deg = _bicubic_degrade(clean, scale) if degraded_planes is None else as_plane(degraded_planes[k])
        ll_gt = swt2(clean, filt, levels).ll
        ll_o = swt2(deg, filt, levels).ll
        h, w = clean.shape
        for y in range(0, h - patch + 1, stride):
            for x in range(0, w - patch + 1, stride):
                pairs.append((ll_o[y : y + patch, x : x + patch], ll_gt[y : y + patch, x : x + patch]))
    return pairs
