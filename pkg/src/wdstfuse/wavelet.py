"""Two-dimensional stationary (undecimated) wavelet transform.

The transform follows the a trous scheme: at level ``i`` the 1-D filters are
dilated by ``2**(i-1)`` (zeros inserted between taps) and applied along the
columns and the rows of ``LL_{i-1}`` with periodic extension.  Nothing is ever
downsampled, so all ``3N + 1`` sub-bands keep the input size.

Convolutions are evaluated as a fixed-order sum of circular shifts, which
makes the transform exactly (bitwise) commute with circular shifts of the
input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError
from .filters import SUPPORTED_FILTERS, WaveletFilterPair, make_filter_pair
from .imgcore import as_plane, save_plane_pgm

__all__ = [
    "SUPPORTED_FILTERS",
    "WaveletFilterPair",
    "SubbandPyramid",
    "make_filter_pair",
    "swt2",
    "iswt2",
    "replace_ll",
    "min_size",
    "dump_pyramid",
]

ORIENTATIONS = ("LH", "HL", "HH")


def _periodic_conv(x, taps, step, offset, axis):
    """``y[n] = sum_k taps[k] * x[n - k*step + offset]`` along ``axis``."""
    out = np.zeros_like(x)
    for k, t in enumerate(taps):
        if t == 0.0:
            continue
        out += t * np.roll(x, k * step - offset, axis=axis)
    return out


def _offsets(length, step):
    # analysis is centred on the filter; synthesis absorbs the remaining delay
    total = (length - 1) * step
    ana = total // 2
    return ana, total - ana


@dataclass
class SubbandPyramid:
    """The ``3N + 1`` equally sized sub-bands of an ``N``-level 2-D SWT.

    ``details[i - 1]`` holds ``(lh_i, hl_i, hh_i)`` for level ``i``, with
    level 1 the finest.
    """

    ll: np.ndarray
    details: list
    filter: WaveletFilterPair = field(repr=False)

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def shape(self):
        return self.ll.shape

    def subbands(self):
        """Yield ``(name, level, plane)`` for every detail sub-band, level-major."""
        for level, triple in enumerate(self.details, start=1):
            for name, band in zip(ORIENTATIONS, triple):
                yield name, level, band

    def with_detail(self, level: int, orientation: str, plane) -> "SubbandPyramid":
        idx = ORIENTATIONS.index(orientation.upper())
        plane = as_plane(plane, f"{orientation}{level}")
        if plane.shape != self.shape:
            raise ContractError(f"sub-band shape {plane.shape} does not match pyramid {self.shape}")
        details = [tuple(t) for t in self.details]
        triple = list(details[level - 1])
        triple[idx] = plane
        details[level - 1] = tuple(triple)
        return replace(self, details=details)

    def map(self, fn) -> "SubbandPyramid":
        """Apply ``fn`` to every sub-band (including LL)."""
        return replace(
            self,
            ll=fn(self.ll),
            details=[tuple(fn(b) for b in triple) for triple in self.details],
        )

    def combine(self, other: "SubbandPyramid", a: float, b: float) -> "SubbandPyramid":
        """Sub-band-wise ``a * self + b * other``."""
        return replace(
            self,
            ll=a * self.ll + b * other.ll,
            details=[
                tuple(a * x + b * y for x, y in zip(t1, t2))
                for t1, t2 in zip(self.details, other.details)
            ],
        )

    def __len__(self):
        return 1 + 3 * self.levels


def min_size(levels: int) -> int:
    """Smallest accepted image side for a ``levels``-deep transform."""
    return 2 ** levels


def _resolve_filter(filt):
    return filt if isinstance(filt, WaveletFilterPair) else make_filter_pair(filt)


def swt2(image, filt, levels: int) -> SubbandPyramid:
    """Decompose ``image`` into an ``levels``-level stationary wavelet pyramid.

    Parameters
    ----------
    image : array_like
        2-D plane.
    filt : WaveletFilterPair or str
        Filter bank or family name.
    levels : int
        Number of decomposition levels, at least 1.
    """
    if int(levels) != levels or levels < 1:
        raise ContractError(f"levels must be a positive integer, got {levels}")
    levels = int(levels)
    x = as_plane(image, "image")
    filt = _resolve_filter(filt)
    need = min_size(levels)
    if min(x.shape) < need:
        raise ContractError(
            f"image of shape {x.shape} is too small for {levels} levels; minimum side is {need}"
        )
    h0, g0, _, _ = filt.arrays()
    ll = x
    details = []
    for i in range(levels):
        step = 2 ** i
        off, _ = _offsets(filt.length, step)
        lo_x = _periodic_conv(ll, h0, step, off, axis=1)
        hi_x = _periodic_conv(ll, g0, step, off, axis=1)
        lh = _periodic_conv(lo_x, g0, step, off, axis=0)
        hl = _periodic_conv(hi_x, h0, step, off, axis=0)
        hh = _periodic_conv(hi_x, g0, step, off, axis=0)
        ll = _periodic_conv(lo_x, h0, step, off, axis=0)
        details.append((lh, hl, hh))
    return SubbandPyramid(ll=ll, details=details, filter=filt)


def iswt2(pyramid: SubbandPyramid) -> np.ndarray:
    """Invert :func:`swt2`, synthesising from the deepest level down to level 1."""
    shape = pyramid.ll.shape
    for triple in pyramid.details:
        if len(triple) != 3:
            raise ContractError("each pyramid level needs exactly three detail sub-bands")
        for band in triple:
            if np.shape(band) != shape:
                raise ContractError(f"sub-band shape {np.shape(band)} does not match LL {shape}")
    _, _, h1, g1 = pyramid.filter.arrays()
    ll = as_plane(pyramid.ll, "LL")
    for i in range(pyramid.levels, 0, -1):
        step = 2 ** (i - 1)
        _, off = _offsets(pyramid.filter.length, step)
        lh, hl, hh = (as_plane(b) for b in pyramid.details[i - 1])
        lo_x = _periodic_conv(ll, h1, step, off, axis=0) + _periodic_conv(lh, g1, step, off, axis=0)
        hi_x = _periodic_conv(hl, h1, step, off, axis=0) + _periodic_conv(hh, g1, step, off, axis=0)
        ll = 0.25 * (
            _periodic_conv(lo_x, h1, step, off, axis=1) + _periodic_conv(hi_x, g1, step, off, axis=1)
        )
    return ll


def replace_ll(pyramid: SubbandPyramid, new_ll) -> SubbandPyramid:
    """Return a copy of ``pyramid`` with its low-frequency band swapped out."""
    new_ll = as_plane(new_ll, "new LL")
    if new_ll.shape != pyramid.ll.shape:
        raise ContractError(f"LL shape {new_ll.shape} does not match pyramid {pyramid.ll.shape}")
    return replace(pyramid, ll=new_ll.copy(), details=list(pyramid.details))


def dump_pyramid(pyramid: SubbandPyramid, directory) -> list:
    """Write each sub-band as a min-max scaled PGM plus a ``scales.txt`` sidecar.

    Returns the list of written image paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bands = [(f"LL{pyramid.levels}", pyramid.ll)]
    bands += [(f"{name}{level}", band) for name, level, band in pyramid.subbands()]
    lines = [f"# filter={pyramid.filter.name} levels={pyramid.levels}", "# name lo hi"]
    written = []
    for name, band in bands:
        lo, hi = float(band.min()), float(band.max())
        scaled = (band - lo) / (hi - lo) if hi > lo else np.full_like(band, 0.5)
        path = directory / f"{name}.pgm"
        save_plane_pgm(scaled, path)
        written.append(path)
        lines.append(f"{name} {lo!r} {hi!r}")
    (directory / "scales.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return written
