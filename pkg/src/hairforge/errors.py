"""Exception types shared across the package."""
from __future__ import annotations


class HairforgeError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedFormat(HairforgeError):
    """Raised when an image file is not 8-bit grayscale/RGB as required."""


class DimensionMismatch(HairforgeError):
    """Raised when images/masks that must share a shape do not."""


class MaskTouchesBorder(HairforgeError):
    """Raised when a blend mask has a true pixel on the image border.

    Every masked equation needs its Dirichlet neighbours to exist, so the
    border row/column must stay outside the mask.
    """


class DidNotConverge(HairforgeError):
    """Raised when an iterative solve exhausts max_iterations above tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"residual {residual:.3e} still above tolerance after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


class EmptyRegion(HairforgeError):
    """Raised when a two-step blend has nothing to solve in its first step."""


class MaskOutOfBounds(HairforgeError):
    """Raised when a transformed mask violates the destination border margin."""


class EmptyAfterTransform(HairforgeError):
    """Raised when resampling leaves a transformed mask with no true pixel."""


class NoFeasiblePlacement(HairforgeError):
    """Raised when placement sampling exhausts its attempt budget."""


class EmptyBoundary(HairforgeError):
    """Raised when seam energy is requested for a mask with no boundary pairs."""


class EmptyAnnulus(HairforgeError):
    """Raised when the colour-bleed annulus around a mask is empty."""


class ConfigError(HairforgeError):
    """Raised for invalid or incomplete pipeline configuration."""
