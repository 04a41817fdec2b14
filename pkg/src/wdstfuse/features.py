"""Convolutional feature extractor with forward capture and input gradients.

The network is a VGG-style chain of 3x3 convolutions (stride 1, zero
padding 1), ReLUs and 2x2/stride-2 pooling.  Inputs are ``(C, H, W)`` arrays;
the low-level ops work on a channel-major ``(C, B, H, W)`` batch, which the
LSE trainer uses.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

__all__ = [
    "LayerKind",
    "PoolMode",
    "LayerSpec",
    "FeatureNetwork",
    "FeatureMaps",
    "conv2d",
    "conv2d_backward",
    "forward",
    "backward",
    "random_network",
    "vgg_network",
    "load_weights",
    "save_weights",
    "replicate_plane",
]

MAGIC = b"WDSTNET1"


class LayerKind(enum.IntEnum):
    CONV = 0
    RELU = 1
    POOL = 2


class PoolMode(enum.IntEnum):
    AVERAGE = 0
    MAX = 1


@dataclass
class LayerSpec:
    kind: LayerKind
    tag: str | None = None
    weight: np.ndarray | None = None  # (out, in, 3, 3)
    bias: np.ndarray | None = None  # (out,)
    pool_mode: PoolMode = PoolMode.AVERAGE

    @property
    def in_channels(self):
        return None if self.weight is None else self.weight.shape[1]

    @property
    def out_channels(self):
        return None if self.weight is None else self.weight.shape[0]


@dataclass
class FeatureNetwork:
    layers: list
    input_channels: int = 3
    # subtracted from the input per channel; only useful with real pretrained weights
    input_offset: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        self.layers = list(self.layers)
        seen = set()
        channels = self.input_channels
        for i, layer in enumerate(self.layers):
            layer.kind = LayerKind(layer.kind)
            if layer.tag:
                if layer.tag in seen:
                    raise ContractError(f"duplicate layer tag {layer.tag!r}")
                seen.add(layer.tag)
            if layer.kind is LayerKind.CONV:
                w = np.asarray(layer.weight, dtype=np.float64)
                if w.ndim != 4 or w.shape[2:] != (3, 3):
                    raise ContractError(f"layer {i}: conv kernel must be out x in x 3 x 3, got {w.shape}")
                if w.shape[1] != channels:
                    raise ContractError(
                        f"layer {i}: expects {w.shape[1]} input channels but receives {channels}"
                    )
                b = np.zeros(w.shape[0]) if layer.bias is None else np.asarray(layer.bias, dtype=np.float64)
                if b.shape != (w.shape[0],):
                    raise ContractError(f"layer {i}: bias shape {b.shape} != ({w.shape[0]},)")
                layer.weight, layer.bias = w, b
                channels = w.shape[0]
            elif layer.kind is LayerKind.POOL:
                layer.pool_mode = PoolMode(layer.pool_mode)
        self.output_channels = channels

    @property
    def tags(self):
        return [layer.tag for layer in self.layers if layer.tag]

    def index_of(self, tag):
        for i, layer in enumerate(self.layers):
            if layer.tag == tag:
                return i
        raise ContractError(f"unknown layer tag {tag!r}; available: {', '.join(self.tags)}")

    def conv_layers(self):
        return [layer for layer in self.layers if layer.kind is LayerKind.CONV]


class FeatureMaps(dict):
    """Activations keyed by layer tag, each of shape ``(N_l, H_l, W_l)``."""

    def n(self, tag) -> int:
        return self[tag].shape[0]

    def m(self, tag) -> int:
        return self[tag].shape[1] * self[tag].shape[2]

    def flat(self, tag) -> np.ndarray:
        f = self[tag]
        return f.reshape(f.shape[0], -1)


# ---------------------------------------------------------------------------
# Primitive ops.  Activations use a channel-major (C, B, H, W) layout so that
# convolution, its input gradient and its weight gradient are single matmuls.
# ---------------------------------------------------------------------------

def _im2col(x):
    c, b, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 9, b, h, w))
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[:, k] = xp[:, :, dy : dy + h, dx : dx + w]
    return cols.reshape(c * 9, b * h * w)


def _col2im(cols, shape):
    c, b, h, w = shape
    cols = cols.reshape(c, 9, b, h, w)
    xp = np.zeros((c, b, h + 2, w + 2))
    for k in range(9):
        dy, dx = divmod(k, 3)
        xp[:, :, dy : dy + h, dx : dx + w] += cols[:, k]
    return xp[:, :, 1:-1, 1:-1]


def conv2d(x, weight, bias, cols=None):
    """3x3 cross-correlation, stride 1, zero padding 1, on a ``(C, B, H, W)`` array."""
    _, b, h, w = x.shape
    if cols is None:
        cols = _im2col(x)
    out = weight.reshape(weight.shape[0], -1) @ cols
    out += bias[:, None]
    return out.reshape(weight.shape[0], b, h, w)


def conv2d_backward(grad_out, x, weight, cols=None, need_params=True):
    """Return ``(grad_x, grad_w, grad_b)`` for :func:`conv2d`."""
    o = grad_out.shape[0]
    g = grad_out.reshape(o, -1)
    grad_x = _col2im(weight.reshape(o, -1).T @ g, x.shape)
    if not need_params:
        return grad_x, None, None
    if cols is None:
        cols = _im2col(x)
    grad_w = (g @ cols.T).reshape(weight.shape)
    return grad_x, grad_w, g.sum(axis=1)


def _pool_forward(x, mode):
    c, b, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ContractError(f"cannot pool a {h}x{w} map")
    blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(c, b, h2, 2, w2, 2)
    if mode is PoolMode.AVERAGE:
        return blocks.mean(axis=(3, 5)), None
    flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(c, b, h2, w2, 4)
    arg = flat.argmax(axis=-1)
    return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(grad_out, in_shape, mode, arg):
    c, b, h, w = in_shape
    h2, w2 = grad_out.shape[2:]
    grad = np.zeros(in_shape)
    if mode is PoolMode.AVERAGE:
        up = np.repeat(np.repeat(grad_out, 2, axis=2), 2, axis=3) * 0.25
    else:
        onehot = np.zeros((c, b, h2, w2, 4))
        np.put_along_axis(onehot, arg[..., None], grad_out[..., None], axis=-1)
        up = onehot.reshape(c, b, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(c, b, 2 * h2, 2 * w2)
    grad[:, :, : 2 * h2, : 2 * w2] = up
    return grad


# ---------------------------------------------------------------------------
# Network forward / backward
# ---------------------------------------------------------------------------

def _as_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != net.input_channels:
        raise ContractError(
            f"network expects a ({net.input_channels}, H, W) input, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ContractError("network input contains non-finite samples")
    offset = np.asarray(net.input_offset[: net.input_channels], dtype=np.float64)
    if np.any(offset):
        x = x - offset[:, None, None]
    return x[:, None]


def _run(net, x, last):
    """Forward to layer index ``last``; returns per-layer outputs and caches."""
    acts, caches = [], []
    h = x
    for layer in net.layers[: last + 1]:
        if layer.kind is LayerKind.CONV:
            cols = _im2col(h)
            caches.append((h, cols))
            h = conv2d(h, layer.weight, layer.bias, cols)
        elif layer.kind is LayerKind.RELU:
            caches.append(h > 0)
            h = np.maximum(h, 0.0)
        else:
            caches.append(h.shape)
            h, arg = _pool_forward(h, layer.pool_mode)
            caches[-1] = (caches[-1], arg)
        acts.append(h)
    return acts, caches


def forward(net: FeatureNetwork, x, tags, return_cache=False):
    """Activations of ``net`` on ``x`` at each tag in ``tags``.

    ``x`` is a ``(C, H, W)`` stack.  With ``return_cache=True`` the
    intermediate state needed by :func:`backward` is returned as well.
    """
    tags = list(tags)
    idx = {t: net.index_of(t) for t in tags}
    last = max(idx.values(), default=-1)
    x0 = _as_input(net, x)
    acts, caches = _run(net, x0, last)
    maps = FeatureMaps({t: acts[i][:, 0] for t, i in idx.items()})
    if return_cache:
        return maps, (x0.shape, caches)
    return maps


def backward(net: FeatureNetwork, x, grads_at_tags, cache=None):
    """Gradient w.r.t. ``x`` of ``sum_tag <grads_at_tags[tag], F_tag(x)>``."""
    idx = {t: net.index_of(t) for t in grads_at_tags}
    if not idx:
        return np.zeros_like(np.asarray(x, dtype=np.float64))
    last = max(idx.values())
    if cache is None or len(cache[1]) <= last:
        x0 = _as_input(net, x)
        _, caches = _run(net, x0, last)
        in_shape = x0.shape
    else:
        in_shape, caches = cache
    by_layer = {}
    for tag, g in grads_at_tags.items():
        g = np.asarray(g, dtype=np.float64)
        by_layer.setdefault(idx[tag], []).append((tag, g))
    grad = None
    for i in range(last, -1, -1):
        for tag, g in by_layer.get(i, ()):
            expected = _layer_out_shape(net, caches, i)
            if g.shape != expected:
                raise ContractError(f"cotangent for {tag!r} has shape {g.shape}, expected {expected}")
            grad = g[:, None].copy() if grad is None else grad + g[:, None]
        if grad is None:
            continue
        layer = net.layers[i]
        if layer.kind is LayerKind.CONV:
            h_in, _ = caches[i]
            grad, _, _ = conv2d_backward(grad, h_in, layer.weight, need_params=False)
        elif layer.kind is LayerKind.RELU:
            grad = grad * caches[i]
        else:
            shape, arg = caches[i]
            grad = _pool_backward(grad, shape, layer.pool_mode, arg)
    if grad is None:
        return np.zeros((in_shape[0],) + in_shape[2:])
    return grad[:, 0]


def _layer_out_shape(net, caches, i):
    layer = net.layers[i]
    if layer.kind is LayerKind.CONV:
        h_in = caches[i][0]
        return (layer.out_channels,) + h_in.shape[2:]
    if layer.kind is LayerKind.RELU:
        m = caches[i]
        return (m.shape[0],) + m.shape[2:]
    (c, b, h, w), _ = caches[i]
    return (c, h // 2, w // 2)


def replicate_plane(plane, channels=3):
    """Stack one plane into ``channels`` identical input channels."""
    plane = np.asarray(plane, dtype=np.float64)
    return np.broadcast_to(plane, (channels,) + plane.shape).copy()


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _vgg_layers(widths, convs_per_block, pool_after, pool_mode, make_conv):
    layers = []
    in_ch = 3
    for block, (width, n_conv) in enumerate(zip(widths, convs_per_block), start=1):
        for j in range(1, n_conv + 1):
            w, b = make_conv(width, in_ch)
            layers.append(LayerSpec(LayerKind.CONV, f"conv{block}_{j}", w, b))
            layers.append(LayerSpec(LayerKind.RELU, f"relu{block}_{j}"))
            in_ch = width
        if block in pool_after:
            layers.append(LayerSpec(LayerKind.POOL, f"pool{block}", pool_mode=pool_mode))
    return layers


def random_network(seed: int, scale: float = 0.3, widths=(8, 16, 16, 32, 32),
                   convs_per_block=(1, 2, 1, 1, 1), pool_after=(1, 2, 3),
                   pool_mode=PoolMode.AVERAGE) -> FeatureNetwork:
    """Deterministic reduced VGG-style network with uniform weights.

    Tags follow the VGG scheme (``conv2_2``, ``relu1_1`` ... ``relu5_1``) so
    it is a drop-in stand-in for pretrained weights.  Weights and biases are
    drawn from U[-scale, scale] and rounded to float32 so that they survive
    the weight file bit-exactly.
    """
    if not scale > 0:
        raise ContractError(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)

    def make_conv(out_ch, in_ch):
        w = _f32(rng.uniform(-scale, scale, size=(out_ch, in_ch, 3, 3)))
        b = _f32(rng.uniform(-scale, scale, size=out_ch))
        return w, b

    return FeatureNetwork(_vgg_layers(widths, convs_per_block, pool_after, PoolMode(pool_mode), make_conv))


def vgg_network(variant: int = 19, seed: int = 0, scale: float = 0.05, widths=(64, 128, 256, 512, 512),
                pool_mode=PoolMode.AVERAGE) -> FeatureNetwork:
    """Full VGG-16/19 layout (5 blocks, pool after each) with seeded weights.

    Useful as a template when converting pretrained weights.
    """
    if variant not in (16, 19):
        raise ContractError(f"VGG variant must be 16 or 19, got {variant}")
    convs = (2, 2, 3, 3, 3) if variant == 16 else (2, 2, 4, 4, 4)
    return random_network(seed, scale, widths, convs, (1, 2, 3, 4, 5), pool_mode)


# ---------------------------------------------------------------------------
# Weight file
# ---------------------------------------------------------------------------

def save_weights(net: FeatureNetwork, path) -> None:
    """Serialise ``net`` to the little-endian ``WDSTNET1`` format."""
    parts = [MAGIC, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        tag = (layer.tag or "").encode("utf-8")
        parts.append(struct.pack("<BH", int(layer.kind), len(tag)))
        parts.append(tag)
        if layer.kind is LayerKind.CONV:
            o, i, kh, kw = layer.weight.shape
            parts.append(struct.pack("<4I", o, i, kh, kw))
            parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
        elif layer.kind is LayerKind.POOL:
            parts.append(struct.pack("<3B", int(layer.pool_mode), 2, 2))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(path) -> FeatureNetwork:
    """Parse a ``WDSTNET1`` weight file; raises :class:`FormatError` on bad input."""
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad magic/version; expected WDSTNET1", 0)
    (count,) = r.unpack("<I", "layer count")
    layers = []
    in_channels = None
    channels = None
    for n in range(count):
        start = r.pos
        kind_byte, tag_len = r.unpack("<BH", f"layer {n} header")
        try:
            kind = LayerKind(kind_byte)
        except ValueError:
            raise FormatError(f"layer {n}: unknown kind byte {kind_byte}", start) from None
        try:
            tag = r.take(tag_len, f"layer {n} tag").decode("utf-8") or None
        except UnicodeDecodeError:
            raise FormatError(f"layer {n}: tag is not valid UTF-8", start + 3) from None
        if kind is LayerKind.CONV:
            dims_at = r.pos
            o, i, kh, kw = r.unpack("<4I", f"layer {n} dims")
            if (kh, kw) != (3, 3):
                raise FormatError(f"layer {n}: only 3x3 kernels are supported, got {kh}x{kw}", dims_at)
            if channels is not None and i != channels:
                raise FormatError(
                    f"layer {n}: broken channel chain ({i} inputs after {channels} outputs)", dims_at
                )
            w = np.frombuffer(r.take(4 * o * i * 9, f"layer {n} weights"), dtype="<f4")
            b = np.frombuffer(r.take(4 * o, f"layer {n} biases"), dtype="<f4")
            if in_channels is None:
                in_channels = i
            channels = o
            layers.append(LayerSpec(kind, tag, w.astype(np.float64).reshape(o, i, 3, 3), b.astype(np.float64)))
        elif kind is LayerKind.POOL:
            mode_at = r.pos
            mode, window, stride = r.unpack("<3B", f"layer {n} pool params")
            if mode not in (0, 1) or (window, stride) != (2, 2):
                raise FormatError(f"layer {n}: unsupported pool parameters", mode_at)
            layers.append(LayerSpec(kind, tag, pool_mode=PoolMode(mode)))
        else:
            layers.append(LayerSpec(kind, tag))
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last layer", r.pos)
    try:
        return FeatureNetwork(layers, input_channels=in_channels or 3)
    except ContractError as exc:
        raise FormatError(str(exc), r.pos) from exc
