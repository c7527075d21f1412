"""Dense fault-displacement estimation, refinement and LTV regularization."""

import warnings

__version__ = "0.1.0"

# numba probes an outdated system TBB and falls back to another threading
# layer; the notice is noise for users
warnings.filterwarnings("ignore", message="The TBB threading layer")

from .core import DisplacementField, FaultflowError, RangeBucket, Raster, RegionMask, classify_range
from .estimate import EstimatorConfig, estimate_flow, make_estimator
from .metrics import MetricsReport, epe, evaluate_run, smoothness
from .pipeline import PipelineConfig, load_preset, run_pipeline
from .refine import RefinementConfig, intermediate_loss, iterative_refine
from .regularize import PenaltyKind, PenaltySpec, RegularizerConfig, regularize_field
from .simulate import FaultSpec, PerturbationSpec, SimulationSpec, TextureSpec, synthesize_pair
from .warp import warp_image

__all__ = [
    "DisplacementField", "EstimatorConfig", "FaultSpec", "FaultflowError", "MetricsReport", "PenaltyKind",
    "PenaltySpec", "PerturbationSpec", "PipelineConfig", "RangeBucket", "Raster", "RefinementConfig",
    "RegionMask", "RegularizerConfig", "SimulationSpec", "TextureSpec", "classify_range", "epe",
    "estimate_flow", "evaluate_run", "intermediate_loss", "iterative_refine", "load_preset",
    "make_estimator", "regularize_field", "run_pipeline", "smoothness", "synthesize_pair", "warp_image",
]
