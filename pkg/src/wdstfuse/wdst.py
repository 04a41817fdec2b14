"""Wavelet-domain style transfer for one high-frequency sub-band.

A detail sub-band of the perception-oriented image (style) and the matching
sub-band of the distortion-oriented image (content) are min-max normalised
to [0, 1]; a new sub-band ``x`` is then found by L-BFGS on

    alpha * content_loss(x, content) + beta * style_loss(x, style) + gamma * |x|_1

where both feature losses are measured on a convolutional feature network
fed with the sub-band replicated into three channels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ContractError
from .features import FeatureMaps, FeatureNetwork, backward, forward, replicate_plane
from .imgcore import as_plane
from .lbfgs import minimize_lbfgs

log = logging.getLogger(__name__)

__all__ = [
    "NormalizedSubband",
    "StyleTransferConfig",
    "normalize_subband",
    "denormalize_subband",
    "gram",
    "content_loss",
    "style_layer_loss",
    "total_style_loss",
    "total_loss",
    "total_loss_gradient",
    "WdstObjective",
    "TransferResult",
    "run_transfer",
    "transfer_subband",
]

DEFAULT_STYLE_TAGS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")


@dataclass(frozen=True)
class NormalizedSubband:
    plane: np.ndarray
    lo: float
    hi: float


def normalize_subband(s) -> NormalizedSubband:
    s = as_plane(s, "sub-band")
    lo, hi = float(s.min()), float(s.max())
    if hi > lo:
        plane = (s - lo) / (hi - lo)
    else:
        plane = np.full_like(s, 0.5)
    return NormalizedSubband(plane, lo, hi)


def denormalize_subband(n: NormalizedSubband) -> np.ndarray:
    """Map a [0, 1] plane back through the stored affine range."""
    plane = as_plane(n.plane)
    if n.hi > n.lo:
        return plane * (n.hi - n.lo) + n.lo
    return np.full_like(plane, n.lo)


@dataclass
class StyleTransferConfig:
    alpha: float = 1.0
    beta: float = 1e3
    gamma: float = 1e-5
    content_tag: str = "conv2_2"
    style_tags: tuple = DEFAULT_STYLE_TAGS
    style_layer_weights: tuple | None = None
    max_iters_per_level: tuple = (5000, 1000)
    grad_tol: float = 1e-6
    lbfgs_memory: int = 10
    init: str = "content"

    def __post_init__(self):
        self.style_tags = tuple(self.style_tags)
        if self.style_layer_weights is None:
            self.style_layer_weights = (0.2,) * len(self.style_tags)
        self.style_layer_weights = tuple(float(w) for w in self.style_layer_weights)
        self.max_iters_per_level = tuple(int(n) for n in self.max_iters_per_level)
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be a finite non-negative number, got {v}")
        if len(self.style_layer_weights) != len(self.style_tags):
            raise ConfigError(
                f"{len(self.style_tags)} style tags but {len(self.style_layer_weights)} layer weights"
            )
        if not self.max_iters_per_level or min(self.max_iters_per_level) < 1:
            raise ConfigError("max_iters_per_level needs at least one positive entry")
        if not self.grad_tol > 0:
            raise ConfigError("grad_tol must be positive")
        if self.lbfgs_memory < 1:
            raise ConfigError("lbfgs_memory must be positive")
        if self.init not in ("content", "style", "average"):
            raise ConfigError(f"init must be content, style or average, got {self.init!r}")

    def iters_for_level(self, level: int) -> int:
        """Iteration cap for 1-based ``level``; deeper levels reuse the last entry."""
        caps = self.max_iters_per_level
        return caps[min(max(level, 1), len(caps)) - 1]

    def to_dict(self):
        d = asdict(self)
        d["style_tags"] = list(self.style_tags)
        d["style_layer_weights"] = list(self.style_layer_weights)
        d["max_iters_per_level"] = list(self.max_iters_per_level)
        return d


# ---------------------------------------------------------------------------
# Loss terms on feature maps
# ---------------------------------------------------------------------------

def _entry(F, tag):
    if tag not in F:
        raise ContractError(f"feature maps have no entry for tag {tag!r}")
    f = np.asarray(F[tag], dtype=np.float64)
    return f.reshape(f.shape[0], -1), f.shape


def gram(F, tag) -> np.ndarray:
    """``F_flat @ F_flat.T`` for the ``N_l x M_l`` flattened maps at ``tag``."""
    flat, _ = _entry(F, tag)
    return flat @ flat.T


def _matched(Fa, Fb, tag):
    a, sa = _entry(Fa, tag)
    b, sb = _entry(Fb, tag)
    if sa != sb:
        raise ContractError(f"feature shapes differ at {tag!r}: {sa} vs {sb}")
    return a, b


def content_loss(Fr, Fo, tag) -> float:
    r, o = _matched(Fr, Fo, tag)
    n, m = r.shape
    return float(np.sum((r - o) ** 2) / (2.0 * math.sqrt(n * m)))


def style_layer_loss(Fr, Fp, tag) -> float:
    r, p = _matched(Fr, Fp, tag)
    n, m = r.shape
    diff = r @ r.T - p @ p.T
    return float(np.sum(diff**2) / (4.0 * n**2 * m**2))


def total_style_loss(Fr, Fp, cfg: StyleTransferConfig) -> float:
    return float(sum(w * style_layer_loss(Fr, Fp, t) for t, w in zip(cfg.style_tags, cfg.style_layer_weights)))


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

class WdstObjective:
    """Loss and analytic gradient for one (content, style) sub-band pair.

    Target features of the content and style planes are computed once; each
    call does one forward and one backward pass through ``net``.
    """

    def __init__(self, content, style, net: FeatureNetwork, cfg: StyleTransferConfig):
        self.content = as_plane(content, "content")
        self.style = as_plane(style, "style")
        if self.content.shape != self.style.shape:
            raise ContractError(f"content {self.content.shape} and style {self.style.shape} differ in shape")
        self.net = net
        self.cfg = cfg
        self.channels = net.input_channels
        self.tags = []
        if cfg.alpha > 0:
            self.tags.append(cfg.content_tag)
        if cfg.beta > 0:
            self.tags += [t for t, w in zip(cfg.style_tags, cfg.style_layer_weights) if w != 0]
        self.tags = list(dict.fromkeys(self.tags))
        for t in self.tags:
            net.index_of(t)
        self.content_maps = forward(net, replicate_plane(self.content, self.channels), self.tags[:1]) \
            if cfg.alpha > 0 else FeatureMaps()
        self.style_grams = {}
        if cfg.beta > 0:
            style_tags = [t for t in self.tags if t in cfg.style_tags]
            sm = forward(net, replicate_plane(self.style, self.channels), style_tags)
            self.style_grams = {t: gram(sm, t) for t in style_tags}

    def terms(self, x):
        """Per-term losses ``(content, style, l1)`` at ``x`` (unweighted)."""
        return self._evaluate(x, want_grad=False)[1]

    def __call__(self, x):
        f, terms, g = self._evaluate(x, want_grad=True)
        return f, g, terms

    def _evaluate(self, x, want_grad):
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.content.shape:
            raise ContractError(f"x shape {x.shape} does not match sub-band {self.content.shape}")
        stack = replicate_plane(x, self.channels)
        if self.tags:
            maps, cache = forward(self.net, stack, self.tags, return_cache=True)
        else:
            maps, cache = FeatureMaps(), None
        cot = {}
        lc = ls = 0.0
        if cfg.alpha > 0:
            tag = cfg.content_tag
            r = maps.flat(tag)
            o = self.content_maps.flat(tag)
            n, m = r.shape
            diff = r - o
            lc = float(np.sum(diff**2) / (2.0 * math.sqrt(n * m)))
            if want_grad:
                cot[tag] = (cfg.alpha / math.sqrt(n * m)) * diff.reshape(maps[tag].shape)
        if cfg.beta > 0:
            for tag, w in zip(cfg.style_tags, cfg.style_layer_weights):
                if w == 0:
                    continue
                r = maps.flat(tag)
                n, m = r.shape
                gdiff = r @ r.T - self.style_grams[tag]
                ls += w * float(np.sum(gdiff**2) / (4.0 * n**2 * m**2))
                if want_grad:
                    g_tag = (cfg.beta * w / (n**2 * m**2)) * (gdiff @ r)
                    g_tag = g_tag.reshape(maps[tag].shape)
                    cot[tag] = cot[tag] + g_tag if tag in cot else g_tag
        l1 = float(np.abs(x).sum())
        f = cfg.alpha * lc + cfg.beta * ls + cfg.gamma * l1
        terms = {"content": lc, "style": ls, "l1": l1}
        if not want_grad:
            return f, terms, None
        grad = cfg.gamma * np.sign(x)
        if cot:
            grad = grad + backward(self.net, stack, cot, cache).sum(axis=0)
        return f, terms, grad


def total_loss(x, content, style, net, cfg) -> float:
    return WdstObjective(content, style, net, cfg)(x)[0]


def total_loss_gradient(x, content, style, net, cfg) -> np.ndarray:
    return WdstObjective(content, style, net, cfg)(x)[1]


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

@dataclass
class TransferResult:
    plane: np.ndarray
    status: str
    iterations: int
    trace: list = field(default_factory=list)
    content_range: tuple = (0.0, 0.0)

    @property
    def warning(self) -> bool:
        return self.status == "line_search_failed"

    @property
    def final_loss(self) -> float:
        return self.trace[-1]["loss"] if self.trace else float("nan")


def run_transfer(content, style, net: FeatureNetwork, cfg: StyleTransferConfig, level: int = 1,
                 max_iters: int | None = None, callback=None) -> TransferResult:
    """Fuse ``style`` detail into ``content`` and return the full run record."""
    content = as_plane(content, "content")
    style = as_plane(style, "style")
    if content.shape != style.shape:
        raise ContractError(f"content {content.shape} and style {style.shape} differ in shape")
    nc = normalize_subband(content)
    ns = normalize_subband(style)
    if cfg.init == "content":
        x0 = nc.plane
    elif cfg.init == "style":
        x0 = ns.plane
    else:
        x0 = 0.5 * (nc.plane + ns.plane)
    objective = WdstObjective(nc.plane, ns.plane, net, cfg)
    cap = cfg.iters_for_level(level) if max_iters is None else int(max_iters)
    res = minimize_lbfgs(objective, x0, max_iters=cap, grad_tol=cfg.grad_tol,
                         memory=cfg.lbfgs_memory, callback=callback)
    if res.warning:
        log.warning("line search failed after %d iterations; returning best iterate", res.iterations)
    out = np.clip(res.x, 0.0, 1.0)
    plane = denormalize_subband(NormalizedSubband(out, nc.lo, nc.hi))
    return TransferResult(plane, res.status, res.iterations, res.trace, (nc.lo, nc.hi))


def transfer_subband(content, style, net, cfg, level: int = 1) -> np.ndarray:
    """Return the fused sub-band for one (content, style) pair."""
    return run_transfer(content, style, net, cfg, level).plane
