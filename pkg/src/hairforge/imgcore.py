"""Core image/mask types, PNG I/O, disk morphology and difference operators.

Conventions fixed here and relied on by the rest of the package:

* intensities are float64 in [0, 1]; 8-bit quantization happens only at PNG
  I/O and rounds half away from zero,
* masks are boolean grids, the image border always counts as *outside* a
  mask, and boundaries/stencils use 4-connectivity,
* gradients are forward differences (zero at the last column/row) paired
  with a backward-difference divergence, so ``divergence(gradient(img))``
  reproduces the 5-point Laplacian on interior pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from .errors import UnsupportedFormat


def round_half_away(values):
    """Round to the nearest integer with halves away from zero (0.5 -> 1, -0.5 -> -1).

    Returns floats; callers cast as needed. This is the single rounding rule
    used for quantization, pixel snapping and nearest-neighbour sampling.
    """
    v = np.asarray(values, dtype=np.float64)
    return np.copysign(np.floor(np.abs(v) + 0.5), v)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Height x width x channels grid of intensities clamped to [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3:
            raise ValueError(f"expected a 2-d or 3-d array, got {px.ndim}-d")
        h, w, c = px.shape
        if h < 1 or w < 1:
            raise ValueError("image must be at least 1x1")
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if not np.isfinite(px).all():
            raise ValueError("image contains non-finite values")
        px = np.clip(px, 0.0, 1.0)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def channel(self, c: int) -> np.ndarray:
        """Read-only 2-d view of one channel."""
        return self.pixels[:, :, c]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean height x width grid; true marks the region of interest."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool, copy=True)
        if b.ndim != 2:
            raise ValueError(f"expected a 2-d array, got {b.ndim}-d")
        if b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError("mask must be at least 1x1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        """Number of true pixels."""
        return int(self.bits.sum())

    def complement(self) -> "BinaryMask":
        return BinaryMask(~self.bits)


@dataclass(frozen=True, eq=False)
class GradientField:
    """Forward-difference gradients per channel; gx/gy are height x width x channels.

    By construction gx is zero on the last column and gy on the last row.
    """

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        gx = np.asarray(self.gx, dtype=np.float64)
        gy = np.asarray(self.gy, dtype=np.float64)
        if gx.ndim != 3 or gy.ndim != 3 or gx.shape != gy.shape:
            raise ValueError("gx and gy must be 3-d arrays of identical shape")
        if gx.shape[1] > 0 and not np.all(gx[:, -1, :] == 0.0):
            raise ValueError("gx must be zero on the last column")
        if gy.shape[0] > 0 and not np.all(gy[-1, :, :] == 0.0):
            raise ValueError("gy must be zero on the last row")
        gx.setflags(write=False)
        gy.setflags(write=False)
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)


# ---------------------------------------------------------------------------
# PNG I/O


def _as_8bit(im: Image.Image) -> Image.Image:
    """Reduce a PIL image to 8-bit L or RGB, rejecting anything lossy to coerce."""
    mode = im.mode
    if mode in ("L", "RGB"):
        return im
    if mode == "P":
        target = "RGBA" if "transparency" in im.info else "RGB"
        return _as_8bit(im.convert(target))
    if mode in ("LA", "RGBA", "PA"):
        lo, _ = im.getchannel("A").getextrema()
        if lo < 255:
            raise UnsupportedFormat("alpha channel is not fully opaque")
        return im.convert("L" if mode in ("LA", "PA") else "RGB")
    raise UnsupportedFormat(
        f"unsupported pixel mode {mode!r}; 8-bit grayscale or RGB required"
    )


def load_image(path) -> RasterImage:
    """Load an 8-bit grayscale or RGB PNG as intensities value/255.

    Raises FileNotFoundError for missing files and UnsupportedFormat for
    16-bit, CMYK, or alpha/palette images that are not fully opaque.
    """
    with Image.open(path) as im:
        im.load()
        eight = _as_8bit(im)
        arr = np.asarray(eight, dtype=np.uint8)
    return RasterImage(arr.astype(np.float64) / 255.0)


def save_image(image: RasterImage, path) -> None:
    """Write an 8-bit PNG; intensities quantize as round(v * 255), halves up."""
    q = np.floor(image.pixels * 255.0 + 0.5).astype(np.uint8)
    if image.channels == 1:
        pil = Image.fromarray(q[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(q, mode="RGB")
    pil.save(path, format="PNG")


def load_mask(path) -> BinaryMask:
    """Load a mask PNG; any nonzero byte in any channel counts as true."""
    img = load_image(path)
    return BinaryMask(np.any(img.pixels > 0.0, axis=2))


def save_mask(mask: BinaryMask, path) -> None:
    """Write a mask as grayscale PNG with 0 = outside, 255 = inside."""
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Morphology on the pixel lattice


@lru_cache(maxsize=32)
def _disk_offsets(radius: float) -> tuple:
    """Offsets (dy, dx) of the discrete disk {dy^2 + dx^2 <= radius^2}."""
    r = int(math.floor(radius))
    r2 = float(radius) * float(radius)
    return tuple(
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dy * dy + dx * dx <= r2
    )


def _shifted(bits: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """Translate a boolean grid by (dy, dx), filling vacated cells with `fill`."""
    out = np.full_like(bits, fill)
    h, w = bits.shape
    y0, y1 = max(dy, 0), min(h + dy, h)
    x0, x1 = max(dx, 0), min(w + dx, w)
    if y0 < y1 and x0 < x1:
        out[y0:y1, x0:x1] = bits[y0 - dy : y1 - dy, x0 - dx : x1 - dx]
    return out


def dilate(mask: BinaryMask, radius: float) -> BinaryMask:
    """Minkowski dilation by the discrete disk of the given radius.

    Pixels beyond the image rectangle count as outside, so content never
    wraps or grows in from the border.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    bits = mask.bits
    out = np.zeros_like(bits)
    for dy, dx in _disk_offsets(radius):
        out |= _shifted(bits, dy, dx, False)
    return BinaryMask(out)


def erode(mask: BinaryMask, radius: float) -> BinaryMask:
    """Minkowski erosion by the discrete disk of the given radius.

    The plane beyond the image counts as outside the mask, so border pixels
    always erode once radius >= 1. Dual to dilate under complement taken on
    the plane (i.e. with the outside-of-image region complementing to true).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    bits = mask.bits
    out = np.ones_like(bits)
    for dy, dx in _disk_offsets(radius):
        out &= _shifted(bits, dy, dx, False)
    return BinaryMask(out)


def mask_boundary(mask: BinaryMask) -> tuple[BinaryMask, BinaryMask]:
    """Inner and outer boundary of a mask under 4-connectivity.

    Inner: mask pixels with at least one non-mask 4-neighbour, the image
    edge counting as non-mask. Outer: non-mask pixels with at least one
    mask 4-neighbour.
    """
    bits = mask.bits
    nonmask_adj = np.zeros_like(bits)
    mask_adj = np.zeros_like(bits)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nonmask_adj |= _shifted(~bits, dy, dx, True)
        mask_adj |= _shifted(bits, dy, dx, False)
    return BinaryMask(bits & nonmask_adj), BinaryMask(~bits & mask_adj)


# ---------------------------------------------------------------------------
# Difference operators


def gradient(image: RasterImage) -> GradientField:
    """Forward-difference gradient per channel; zero on the last column/row."""
    px = image.pixels
    gx = np.zeros_like(px)
    gy = np.zeros_like(px)
    gx[:, :-1, :] = px[:, 1:, :] - px[:, :-1, :]
    gy[:-1, :, :] = px[1:, :, :] - px[:-1, :, :]
    return GradientField(gx, gy)


def divergence(field: GradientField) -> np.ndarray:
    """Backward-difference divergence, the adjoint pairing for `gradient`.

    For any image, divergence(gradient(img)) equals the 4-neighbour Laplacian
    (sum of neighbours minus 4 * centre) at every interior pixel.
    """
    gx, gy = field.gx, field.gy
    div = gx.copy()
    div[:, 1:, :] -= gx[:, :-1, :]
    div += gy
    div[1:, :, :] -= gy[:-1, :, :]
    return div
