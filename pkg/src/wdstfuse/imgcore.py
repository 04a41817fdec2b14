"""Image containers, colour conversion and file I/O.

An image plane is a plain 2-D ``float64`` :class:`numpy.ndarray`; pixel
intensities live in [0, 1] by convention while wavelet coefficients are
unbounded.  A :class:`ColorImage` bundles three equally sized planes with a
colour-space tag.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, ImageIOError

__all__ = [
    "ColorSpace",
    "ColorImage",
    "as_plane",
    "check_finite",
    "load_image",
    "save_image",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
]


class ColorSpace(str, enum.Enum):
    RGB = "rgb"
    YCBCR = "ycbcr"


# Full-range BT.601 (JFIF) luma/chroma matrix; chroma is offset by 0.5.
_RGB2YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.299 / 1.772, -0.587 / 1.772, 0.886 / 1.772],
        [0.701 / 1.402, -0.587 / 1.402, -0.114 / 1.402],
    ]
)
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


def check_finite(arr, what="input"):
    """Raise :class:`ContractError` if ``arr`` holds NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{what} contains non-finite samples")
    return arr


def as_plane(data, what="plane") -> np.ndarray:
    """Validate and return ``data`` as a finite 2-D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"{what} must be a non-empty 2-D array, got shape {arr.shape}")
    return check_finite(arr, what)


@dataclass(frozen=True)
class ColorImage:
    """Three same-sized planes plus their colour space.

    ``planes`` has shape ``(3, height, width)``.
    """

    planes: np.ndarray
    space: ColorSpace = ColorSpace.RGB

    def __post_init__(self):
        arr = np.asarray(self.planes, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ContractError(f"ColorImage needs shape (3, H, W), got {arr.shape}")
        check_finite(arr, "ColorImage")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "planes", arr)
        object.__setattr__(self, "space", ColorSpace(self.space))

    @classmethod
    def from_gray(cls, plane) -> "ColorImage":
        p = as_plane(plane)
        return cls(np.stack([p, p, p]), ColorSpace.RGB)

    @classmethod
    def from_hwc(cls, arr, space=ColorSpace.RGB) -> "ColorImage":
        return cls(np.moveaxis(np.asarray(arr, dtype=np.float64), -1, 0), space)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self):
        return self.planes.shape[1:]

    def to_hwc(self) -> np.ndarray:
        return np.moveaxis(self.planes, 0, -1).copy()

    def with_plane(self, index: int, plane) -> "ColorImage":
        planes = self.planes.copy()
        planes[index] = as_plane(plane)
        return ColorImage(planes, self.space)


def rgb_to_ycbcr(image: ColorImage) -> ColorImage:
    if image.space is not ColorSpace.RGB:
        raise ContractError(f"rgb_to_ycbcr expects an RGB image, got {image.space.value}")
    ycc = np.einsum("ij,jhw->ihw", _RGB2YCC, image.planes)
    ycc += _CHROMA_OFFSET[:, None, None]
    return ColorImage(ycc, ColorSpace.YCBCR)


def ycbcr_to_rgb(image: ColorImage) -> ColorImage:
    if image.space is not ColorSpace.YCBCR:
        raise ContractError(f"ycbcr_to_rgb expects a YCbCr image, got {image.space.value}")
    centered = image.planes - _CHROMA_OFFSET[:, None, None]
    return ColorImage(np.einsum("ij,jhw->ihw", _YCC2RGB, centered), ColorSpace.RGB)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}


def _pnm_tokens(raw: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(int(raw[start:pos]))
    return tokens, pos


def _read_pnm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    magic = raw[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    (width, height, maxval), pos = _pnm_tokens(raw, 3, 2)
    if not 0 < maxval < 256:
        raise ValueError(f"unsupported bit depth (maxval {maxval}); only 8-bit is supported")
    count = width * height * channels
    if magic in (b"P2", b"P3"):
        values = np.array(raw[pos:].split()[:count], dtype=np.int64)
    else:
        pos += 1  # single whitespace byte after maxval
        values = np.frombuffer(raw, dtype=np.uint8, count=min(count, len(raw) - pos), offset=pos)
    if values.size != count:
        raise ValueError(f"expected {count} samples, found {values.size}")
    arr = values.reshape(height, width, channels).astype(np.float64) / maxval
    return arr


def load_image(path) -> ColorImage:
    """Read a PNG or PGM/PPM file as an RGB :class:`ColorImage` in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(path, "no such file")
    try:
        if path.suffix.lower() in _PNM_SUFFIXES:
            arr = _read_pnm(path)
        else:
            with Image.open(path) as im:
                if im.format != "PNG":
                    raise ValueError(f"unsupported format {im.format}")
                if im.mode in ("I", "I;16", "I;16B", "F"):
                    raise ValueError(f"unsupported bit depth (mode {im.mode})")
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float64) / 255.0
                if arr.ndim == 2:
                    arr = arr[:, :, None]
    except ImageIOError:
        raise
    except (OSError, ValueError) as exc:
        raise ImageIOError(path, str(exc)) from exc
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return ColorImage.from_hwc(arr, ColorSpace.RGB)


def _quantize(arr: np.ndarray) -> np.ndarray:
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(image: ColorImage, path) -> None:
    """Write ``image`` as 8-bit PNG (or binary PPM/PGM by suffix).

    YCbCr images are converted to RGB first.  Samples are clamped to [0, 1].
    """
    path = Path(path)
    if image.space is ColorSpace.YCBCR:
        image = ycbcr_to_rgb(image)
    check_finite(image.planes, "image")
    pixels = _quantize(image.to_hwc())
    try:
        if path.suffix.lower() in _PNM_SUFFIXES:
            gray = path.suffix.lower() == ".pgm"
            body = pixels[:, :, 0] if gray else pixels
            header = f"{'P5' if gray else 'P6'}\n{image.width} {image.height}\n255\n"
            path.write_bytes(header.encode("ascii") + np.ascontiguousarray(body).tobytes())
        else:
            Image.fromarray(pixels, "RGB").save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(path, exc.strerror or str(exc)) from exc


def save_plane_pgm(plane, path) -> None:
    """Write a [0, 1] plane as a binary 8-bit PGM."""
    path = Path(path)
    pixels = _quantize(as_plane(plane))
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    try:
        path.write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise ImageIOError(path, exc.strerror or str(exc)) from exc
