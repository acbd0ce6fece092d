"""Placing real hair exemplars onto destination images.

An exemplar (hairy image + hair mask) is flipped, scaled and rotated about
its own centre, then translated by an integer offset into the destination
frame. Image content resamples bilinearly, masks by nearest neighbour so
the ground truth stays hard; the mask is then dilated (1 px by default) to
swallow anti-aliased hair fringes. Identity parameters reproduce the
exemplar bit-exactly, and axis-aligned 90-degree rotations on square frames
permute pixels, preserving mask popcounts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAfterTransform,
    MaskOutOfBounds,
    NoFeasiblePlacement,
)
from .imgcore import (
    BinaryMask,
    RasterImage,
    dilate,
    load_image,
    load_mask,
    round_half_away,
)

SCALE_MIN = 0.5
SCALE_MAX = 2.0

# Resolved masks must keep this many pixels clear of the destination border,
# which keeps every blend's Dirichlet boundary inside the image.
BORDER_MARGIN = 1


@dataclass(frozen=True)
class HairExemplar:
    """A hairy source image with its hair mask and an origin note."""

    id: str
    image: RasterImage
    mask: BinaryMask
    provenance: str = ""

    def __post_init__(self):
        if (self.image.height, self.image.width) != (
            self.mask.height,
            self.mask.width,
        ):
            raise DimensionMismatch(
                f"exemplar {self.id!r}: image "
                f"{self.image.height}x{self.image.width} vs mask "
                f"{self.mask.height}x{self.mask.width}"
            )
        if self.mask.count == 0:
            raise ValueError(f"exemplar {self.id!r} has an empty mask")


@dataclass(frozen=True)
class PlacementSpec:
    """Geometry for one placement; enough to replay it exactly."""

    exemplar_id: str
    rotation: float
    scale: float
    flip_h: bool
    flip_v: bool
    offset: tuple[int, int]
    mask_dilation: int = 1

    def __post_init__(self):
        if not (0.0 <= self.rotation < 360.0):
            raise ValueError(f"rotation {self.rotation} outside [0, 360)")
        if not (SCALE_MIN <= self.scale <= SCALE_MAX):
            raise ValueError(f"scale {self.scale} outside [{SCALE_MIN}, {SCALE_MAX}]")
        dx, dy = self.offset
        if dx != int(dx) or dy != int(dy):
            raise ValueError("offset must be integer pixels")
        if self.mask_dilation < 0:
            raise ValueError("mask_dilation must be >= 0")
        object.__setattr__(self, "offset", (int(dx), int(dy)))


@dataclass(frozen=True)
class Placement:
    """A spec resolved against a destination: source image + hard mask."""

    spec: PlacementSpec
    resolved_source: RasterImage
    resolved_mask: BinaryMask


def _inverse_map(
    xs: np.ndarray,
    ys: np.ndarray,
    ex_width: int,
    ex_height: int,
    spec: PlacementSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Destination coordinates -> exemplar sampling coordinates.

    Forward order is flip, scale+rotate about the exemplar centre, offset;
    this runs it backwards. All-float, exact for identity parameters.
    """
    cx = 0.5 * (ex_width - 1.0)
    cy = 0.5 * (ex_height - 1.0)
    px = xs - float(spec.offset[0]) - cx
    py = ys - float(spec.offset[1]) - cy
    theta = math.radians(spec.rotation)
    c, s = math.cos(theta), math.sin(theta)
    qx = (c * px + s * py) / spec.scale + cx
    qy = (-s * px + c * py) / spec.scale + cy
    if spec.flip_h:
        qx = (ex_width - 1.0) - qx
    if spec.flip_v:
        qy = (ex_height - 1.0) - qy
    return qx, qy


def _sample_mask_nearest(
    bits: np.ndarray, qx: np.ndarray, qy: np.ndarray
) -> np.ndarray:
    h, w = bits.shape
    xi = round_half_away(qx).astype(np.int64)
    yi = round_half_away(qy).astype(np.int64)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros(qx.shape, dtype=bool)
    out[inside] = bits[yi[inside], xi[inside]]
    return out


def _sample_image_bilinear(
    px: np.ndarray, qx: np.ndarray, qy: np.ndarray, fill: np.ndarray
) -> np.ndarray:
    h, w = px.shape[:2]
    inside = (qx >= -0.5) & (qx < w - 0.5) & (qy >= -0.5) & (qy < h - 0.5)
    cx = np.clip(qx, 0.0, float(w - 1))
    cy = np.clip(qy, 0.0, float(h - 1))
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (cx - x0)[:, :, np.newaxis]
    fy = (cy - y0)[:, :, np.newaxis]
    val = (
        (1.0 - fy) * (1.0 - fx) * px[y0, x0]
        + (1.0 - fy) * fx * px[y0, x1]
        + fy * (1.0 - fx) * px[y1, x0]
        + fy * fx * px[y1, x1]
    )
    return np.where(inside[:, :, np.newaxis], val, fill[np.newaxis, np.newaxis, :])


def _transformed_mask(
    ex: HairExemplar,
    spec: PlacementSpec,
    x_range: tuple[int, int],
    y_range: tuple[int, int],
) -> np.ndarray:
    """Transformed + dilated mask over an inclusive world-coordinate window."""
    xs = np.arange(x_range[0], x_range[1] + 1, dtype=np.float64)
    ys = np.arange(y_range[0], y_range[1] + 1, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    qx, qy = _inverse_map(gx, gy, ex.image.width, ex.image.height, spec)
    bits = _sample_mask_nearest(ex.mask.bits, qx, qy)
    if spec.mask_dilation > 0:
        bits = dilate(BinaryMask(bits), spec.mask_dilation).bits
    return bits


def _content_reach(ex: HairExemplar, spec: PlacementSpec) -> float:
    """Radius around the placed centre that bounds all transformed mask pixels."""
    half_diag = 0.5 * math.hypot(ex.image.width, ex.image.height)
    return spec.scale * (half_diag + 1.0) + spec.mask_dilation + 2.0


def transform_exemplar(
    ex: HairExemplar, spec: PlacementSpec, dest_size: tuple[int, int]
) -> Placement:
    """Resolve a spec against a destination size (width, height).

    Raises EmptyAfterTransform when no mask pixel survives resampling and
    MaskOutOfBounds when any surviving pixel (after dilation) violates the
    1-pixel border margin of the destination.
    """
    width, height = dest_size
    if width < 3 or height < 3:
        raise MaskOutOfBounds(
            f"destination {width}x{height} has no interior for a margin of "
            f"{BORDER_MARGIN}"
        )
    cx = 0.5 * (ex.image.width - 1.0) + spec.offset[0]
    cy = 0.5 * (ex.image.height - 1.0) + spec.offset[1]
    reach = _content_reach(ex, spec)
    # Window covering both the destination and everything the mask can reach,
    # so out-of-frame content cannot silently clip before the bounds check.
    x_lo = min(0, int(math.floor(cx - reach)))
    x_hi = max(width - 1, int(math.ceil(cx + reach)))
    y_lo = min(0, int(math.floor(cy - reach)))
    y_hi = max(height - 1, int(math.ceil(cy + reach)))
    bits = _transformed_mask(ex, spec, (x_lo, x_hi), (y_lo, y_hi))
    if not bits.any():
        raise EmptyAfterTransform(
            f"exemplar {ex.id!r} mask vanished under {spec}"
        )
    rows, cols = np.nonzero(bits)
    wy = rows + y_lo
    wx = cols + x_lo
    lo = BORDER_MARGIN
    if (
        wy.min() < lo
        or wy.max() > height - 1 - lo
        or wx.min() < lo
        or wx.max() > width - 1 - lo
    ):
        raise MaskOutOfBounds(
            f"transformed mask spans rows {wy.min()}..{wy.max()}, "
            f"cols {wx.min()}..{wx.max()} in a {height}x{width} destination"
        )
    mask_bits = bits[-y_lo : height - y_lo, -x_lo : width - x_lo]

    gx, gy = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    qx, qy = _inverse_map(gx, gy, ex.image.width, ex.image.height, spec)
    fill = ex.image.pixels.mean(axis=(0, 1))
    source = _sample_image_bilinear(ex.image.pixels, qx, qy, fill)
    return Placement(spec, RasterImage(source), BinaryMask(mask_bits))


def sample_placement(
    ex: HairExemplar,
    destination: RasterImage,
    rng: np.random.Generator,
    max_attempts: int = 64,
) -> PlacementSpec:
    """Draw a feasible placement spec, or raise NoFeasiblePlacement.

    Per attempt the draws are rotation U[0,360), scale U[0.5,2], two fair
    flips, then (when the transformed mask fits anywhere) an offset uniform
    over exactly the integer offsets that keep it inside the border margin.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    width, height = destination.width, destination.height
    for _ in range(max_attempts):
        rotation = float(rng.uniform(0.0, 360.0))
        if rotation >= 360.0:  # guard the half-open interval against rounding
            rotation = 0.0
        scale = float(rng.uniform(SCALE_MIN, SCALE_MAX))
        flip_h = bool(rng.integers(2))
        flip_v = bool(rng.integers(2))
        probe = PlacementSpec(ex.id, rotation, scale, flip_h, flip_v, (0, 0))
        cx = 0.5 * (ex.image.width - 1.0)
        cy = 0.5 * (ex.image.height - 1.0)
        reach = _content_reach(ex, probe)
        x_lo, x_hi = int(math.floor(cx - reach)), int(math.ceil(cx + reach))
        y_lo, y_hi = int(math.floor(cy - reach)), int(math.ceil(cy + reach))
        bits = _transformed_mask(ex, probe, (x_lo, x_hi), (y_lo, y_hi))
        if not bits.any():
            continue
        rows, cols = np.nonzero(bits)
        by0, by1 = rows.min() + y_lo, rows.max() + y_lo
        bx0, bx1 = cols.min() + x_lo, cols.max() + x_lo
        dx_lo, dx_hi = BORDER_MARGIN - bx0, (width - 1 - BORDER_MARGIN) - bx1
        dy_lo, dy_hi = BORDER_MARGIN - by0, (height - 1 - BORDER_MARGIN) - by1
        if dx_lo > dx_hi or dy_lo > dy_hi:
            continue
        dx = int(rng.integers(dx_lo, dx_hi + 1))
        dy = int(rng.integers(dy_lo, dy_hi + 1))
        return PlacementSpec(
            ex.id, rotation, scale, flip_h, flip_v, (dx, dy), probe.mask_dilation
        )
    raise NoFeasiblePlacement(
        f"no feasible placement of exemplar {ex.id!r} on a {height}x{width} "
        f"destination after {max_attempts} attempts"
    )


def load_exemplar_library(directory) -> list[HairExemplar]:
    """Load `<id>.png` + `<id>.mask.png` pairs, in lexicographic id order.

    Files without a matching partner are ignored.
    """
    root = Path(directory)
    ids = sorted(
        p.name[: -len(".png")]
        for p in root.glob("*.png")
        if not p.name.endswith(".mask.png") and (root / f"{p.name[:-4]}.mask.png").exists()
    )
    library = []
    for ex_id in ids:
        image = load_image(root / f"{ex_id}.png")
        mask = load_mask(root / f"{ex_id}.mask.png")
        library.append(
            HairExemplar(ex_id, image, mask, provenance=str(root / f"{ex_id}.png"))
        )
    return library
