"""Synthetic hair rendering: random cubic Bezier strokes on a skin image.

Strokes are medial curves rasterized to 1-pixel polylines and thickened by
disk dilation; colours come from a small named dictionary. Gaussian blur is
applied to each stroke's alpha, never to the final image, so the reported
ground-truth mask stays hard while edges blend softly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch
from .imgcore import BinaryMask, RasterImage, dilate, round_half_away

COLOUR_NAMES = ("yellow", "brown", "white", "black", "grey")

DEFAULT_PALETTE = (
    (0.88, 0.79, 0.47),
    (0.35, 0.22, 0.12),
    (0.92, 0.92, 0.90),
    (0.06, 0.06, 0.06),
    (0.55, 0.55, 0.55),
)

RADIUS_MIN = 0.5
RADIUS_MAX = 5.0

# Endpoints of a sampled stroke must span at least this fraction of the
# canvas's shorter side, so strokes read as hairs rather than specks.
MIN_SPAN_FRACTION = 0.3


@dataclass(frozen=True)
class HairStroke:
    """One hair: a cubic Bezier medial curve, a thickness radius, a colour."""

    control_points: tuple[tuple[float, float], ...]
    radius: float
    colour_id: int

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.control_points)
        if len(pts) != 4:
            raise ValueError(f"expected 4 control points, got {len(pts)}")
        if len(set(pts)) < 2:
            raise ValueError("control points are all coincident")
        if not (RADIUS_MIN <= self.radius <= RADIUS_MAX):
            raise ValueError(
                f"radius {self.radius} outside [{RADIUS_MIN}, {RADIUS_MAX}]"
            )
        if not (0 <= self.colour_id < len(DEFAULT_PALETTE)):
            raise ValueError(f"colour_id {self.colour_id} outside the dictionary")
        object.__setattr__(self, "control_points", pts)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one rendering run; `canvas` is (width, height) or None to
    match the base image at render time."""

    stroke_count: int
    radius_range: tuple[float, float] = (RADIUS_MIN, RADIUS_MAX)
    blur_sigma: float = 1.0
    seed: int = 0
    canvas: tuple[int, int] | None = None
    palette: tuple[tuple[float, float, float], ...] = DEFAULT_PALETTE

    def __post_init__(self):
        if self.stroke_count < 1:
            raise ValueError("stroke_count must be >= 1")
        lo, hi = self.radius_range
        if not (RADIUS_MIN <= lo <= hi <= RADIUS_MAX):
            raise ValueError(
                f"radius_range {self.radius_range} outside [{RADIUS_MIN}, {RADIUS_MAX}]"
            )
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.canvas is not None:
            w, h = self.canvas
            if w < 1 or h < 1:
                raise ValueError("canvas dimensions must be >= 1")
        if len(self.palette) != len(DEFAULT_PALETTE):
            raise ValueError(f"palette must list {len(DEFAULT_PALETTE)} colours")
        for rgb in self.palette:
            if len(rgb) != 3 or any(not (0.0 <= v <= 1.0) for v in rgb):
                raise ValueError(f"palette entry {rgb} is not an RGB triple in [0,1]")


def sample_strokes(config: SynthConfig, rng: np.random.Generator) -> list[HairStroke]:
    """Draw exactly stroke_count strokes from the given generator.

    Per stroke, in order: the 4 control points (redrawn together until the
    endpoints span the minimum distance), the radius, then the colour.
    """
    if config.canvas is None:
        raise ValueError("sampling strokes requires a concrete canvas size")
    w, h = config.canvas
    min_span = MIN_SPAN_FRACTION * min(w, h)
    lo, hi = config.radius_range
    strokes = []
    for _ in range(config.stroke_count):
        while True:
            pts = rng.uniform(
                low=(0.0, 0.0), high=(float(w - 1), float(h - 1)), size=(4, 2)
            )
            if math.hypot(pts[3, 0] - pts[0, 0], pts[3, 1] - pts[0, 1]) >= min_span:
                break
        radius = float(rng.uniform(lo, hi))
        colour = int(rng.integers(len(config.palette)))
        strokes.append(
            HairStroke(tuple((p[0], p[1]) for p in pts), radius, colour)
        )
    return strokes


def rasterize_stroke(stroke: HairStroke, canvas: tuple[int, int]) -> BinaryMask:
    """Hard stroke mask: dense Bezier samples snapped to pixels, then dilated.

    The curve is sampled at >= 4x the control polygon length so consecutive
    samples land under a pixel apart; the polyline is dilated by
    round(radius) (halves away from zero). Samples outside the canvas clip.
    """
    w, h = canvas
    pts = np.asarray(stroke.control_points, dtype=np.float64)
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    n = max(int(math.ceil(4.0 * seglen)), 2)
    t = np.linspace(0.0, 1.0, n)[:, np.newaxis]
    u = 1.0 - t
    curve = (
        u**3 * pts[0]
        + 3.0 * u**2 * t * pts[1]
        + 3.0 * u * t**2 * pts[2]
        + t**3 * pts[3]
    )
    xi = round_half_away(curve[:, 0]).astype(np.int64)
    yi = round_half_away(curve[:, 1]).astype(np.int64)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    bits = np.zeros((h, w), dtype=bool)
    bits[yi[inside], xi[inside]] = True
    return dilate(BinaryMask(bits), int(round_half_away(stroke.radius)))


def _gaussian_blur(alpha: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with zero padding; kernel reaches 3 sigma."""
    r = max(1, int(math.ceil(3.0 * sigma)))
    k = np.exp(-0.5 * (np.arange(-r, r + 1, dtype=np.float64) / sigma) ** 2)
    k /= k.sum()
    h, w = alpha.shape
    padded = np.zeros((h, w + 2 * r))
    padded[:, r : r + w] = alpha
    horiz = np.zeros_like(alpha)
    for i, weight in enumerate(k):
        horiz += weight * padded[:, i : i + w]
    padded = np.zeros((h + 2 * r, w))
    padded[r : r + h, :] = horiz
    out = np.zeros_like(alpha)
    for i, weight in enumerate(k):
        out += weight * padded[i : i + h, :]
    return out


def render_hair(
    config: SynthConfig, base: RasterImage
) -> tuple[RasterImage, BinaryMask]:
    """Render sampled strokes onto a copy of `base`; returns (image, mask).

    Strokes composite back to front in sample order, later strokes winning
    via their alpha. The returned mask is the union of the *hard* stroke
    masks regardless of blur, so it stays valid as segmentation ground truth.
    Fully deterministic for a given config (the seed lives in the config).
    """
    canvas = config.canvas or (base.width, base.height)
    if canvas != (base.width, base.height):
        raise DimensionMismatch(
            f"canvas {canvas} vs base {(base.width, base.height)}"
        )
    rng = np.random.default_rng(config.seed)
    sized = config if config.canvas else replace(config, canvas=canvas)
    strokes = sample_strokes(sized, rng)
    out = base.pixels.copy()
    truth = np.zeros((base.height, base.width), dtype=bool)
    for stroke in strokes:
        hard = rasterize_stroke(stroke, canvas)
        truth |= hard.bits
        alpha = hard.bits.astype(np.float64)
        if config.blur_sigma > 0.0:
            alpha = _gaussian_blur(alpha, config.blur_sigma)
        rgb = np.asarray(config.palette[stroke.colour_id], dtype=np.float64)
        colour = rgb if base.channels == 3 else np.array([rgb.mean()])
        a = alpha[:, :, np.newaxis]
        out = colour * a + out * (1.0 - a)
    return RasterImage(out), BinaryMask(truth)
