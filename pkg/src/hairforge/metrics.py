"""Seam and colour-bleed measurements for blended outputs, plus crop export."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyAnnulus, EmptyBoundary
from .imgcore import BinaryMask, RasterImage, dilate, save_image

# The colour-bleed annulus reaches this far beyond the mask.
BLEED_RADIUS = 3


@dataclass(frozen=True)
class SeamReport:
    """Both metrics for one (output, destination, mask) triple."""

    seam_energy: float
    bleed_delta: float
    seam_per_channel: tuple[float, ...]
    bleed_per_channel: tuple[float, ...]


def _check_dims(image: RasterImage, mask: BinaryMask) -> None:
    if (image.height, image.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image {image.height}x{image.width} vs mask {mask.height}x{mask.width}"
        )


def _seam_per_channel(image: RasterImage, mask: BinaryMask) -> np.ndarray:
    _check_dims(image, mask)
    bits = mask.bits
    px = image.pixels
    h_pairs = bits[:, 1:] != bits[:, :-1]
    v_pairs = bits[1:, :] != bits[:-1, :]
    n_pairs = int(h_pairs.sum()) + int(v_pairs.sum())
    if n_pairs == 0:
        raise EmptyBoundary("mask has no 4-adjacent inside/outside pixel pairs")
    dh = px[:, 1:, :] - px[:, :-1, :]
    dv = px[1:, :, :] - px[:-1, :, :]
    total = (dh[h_pairs] ** 2).sum(axis=0) + (dv[v_pairs] ** 2).sum(axis=0)
    return total / n_pairs


def seam_energy(image: RasterImage, mask: BinaryMask) -> float:
    """Mean squared intensity jump across the mask boundary, summed over channels.

    Averages over every 4-adjacent (inside, outside) pixel pair; each pair
    contributes the sum over channels of its squared difference.
    """
    return float(_seam_per_channel(image, mask).sum())


def _bleed_per_channel(
    output: RasterImage, destination: RasterImage, mask: BinaryMask
) -> np.ndarray:
    _check_dims(output, mask)
    _check_dims(destination, mask)
    if output.channels != destination.channels:
        raise DimensionMismatch(
            f"output has {output.channels} channels, destination {destination.channels}"
        )
    annulus = dilate(mask, BLEED_RADIUS).bits & ~mask.bits
    if not annulus.any():
        raise EmptyAnnulus(f"no pixels within {BLEED_RADIUS} px outside the mask")
    diff = np.abs(output.pixels[annulus] - destination.pixels[annulus])
    return diff.mean(axis=0)


def bleed_delta(
    output: RasterImage, destination: RasterImage, mask: BinaryMask
) -> float:
    """Mean absolute change just outside the mask (3 px annulus), over channels.

    Zero exactly when the output preserves the destination outside the mask,
    so any nonzero value flags halo artefacts or exterior corruption.
    """
    return float(_bleed_per_channel(output, destination, mask).mean())


def seam_report(
    output: RasterImage, destination: RasterImage, mask: BinaryMask
) -> SeamReport:
    seam = _seam_per_channel(output, mask)
    bleed = _bleed_per_channel(output, destination, mask)
    return SeamReport(
        seam_energy=float(seam.sum()),
        bleed_delta=float(bleed.mean()),
        seam_per_channel=tuple(float(v) for v in seam),
        bleed_per_channel=tuple(float(v) for v in bleed),
    )


def export_crops(
    output: RasterImage,
    mask: BinaryMask,
    pad: int,
    path,
    source_image: str = "",
) -> dict:
    """Write the mask's padded bounding-box crop as PNG plus a JSON sidecar.

    The sidecar (same path with a .json suffix) records the crop window as
    {"x", "y", "width", "height", "source_image"} so external scoring can
    relocate the crop in the original. Returns the sidecar dict.
    """
    _check_dims(output, mask)
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if mask.count == 0:
        raise ValueError("cannot crop to an empty mask")
    rows, cols = np.nonzero(mask.bits)
    y0 = max(int(rows.min()) - pad, 0)
    y1 = min(int(rows.max()) + pad, output.height - 1)
    x0 = max(int(cols.min()) - pad, 0)
    x1 = min(int(cols.max()) + pad, output.width - 1)
    crop = RasterImage(output.pixels[y0 : y1 + 1, x0 : x1 + 1, :])
    path = Path(path)
    save_image(crop, path)
    sidecar = {
        "x": x0,
        "y": y0,
        "width": x1 - x0 + 1,
        "height": y1 - y0 + 1,
        "source_image": source_image,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar))
    return sidecar
