"""hairforge: hair simulation for dermoscopic images.

Blends real hair exemplars (or synthetic Bezier strokes) onto hair-free skin
images in the gradient domain, and reports the exact binary mask of every
simulated hair so outputs double as segmentation/removal ground truth.
"""
from .errors import (
    ConfigError,
    DidNotConverge,
    DimensionMismatch,
    EmptyAfterTransform,
    EmptyAnnulus,
    EmptyBoundary,
    EmptyRegion,
    HairforgeError,
    MaskOutOfBounds,
    MaskTouchesBorder,
    NoFeasiblePlacement,
    UnsupportedFormat,
)
from .imgcore import (
    BinaryMask,
    GradientField,
    RasterImage,
    dilate,
    divergence,
    erode,
    gradient,
    load_image,
    load_mask,
    mask_boundary,
    round_half_away,
    save_image,
    save_mask,
)
from .poisson import (
    BlendMode,
    BlendRequest,
    BlendResult,
    PoissonProblem,
    SolveResult,
    SolveStats,
    SolverConfig,
    SolverMethod,
    assemble,
    blend,
    blend_naive,
    blend_poisson,
    blend_two_step,
    solve,
)
from .hairsynth import (
    COLOUR_NAMES,
    DEFAULT_PALETTE,
    HairStroke,
    SynthConfig,
    rasterize_stroke,
    render_hair,
    sample_strokes,
)
from .placement import (
    HairExemplar,
    Placement,
    PlacementSpec,
    load_exemplar_library,
    sample_placement,
    transform_exemplar,
)
from .metrics import SeamReport, bleed_delta, export_crops, seam_energy, seam_report
from .cli import PipelineConfig, SimulationManifest, cmd_blend, cmd_metrics, cmd_simulate, cmd_synth, derive_seed

__version__ = "0.1.0"
