"""Design of compressive sensing matrices with generalized coherence criteria
and block-based image reconstruction by basis pursuit denoising."""

from .bpdn import BpdnInfo, BpdnSettings, Status, solve_bpdn, solve_bpdn_batch
from .criteria import (
    CriterionSpec,
    Kind,
    bicoherence_loss,
    coherence_loss,
    criterion_from_name,
    evaluate,
    mu_avg,
    mu_max,
    omega2,
    tricoherence_loss,
)
from .linalg import (
    Dictionary,
    GramState,
    Mode,
    SensingMatrix,
    build_gram,
    dct_dictionary,
    flip_update,
    load_matrix,
    save_matrix,
    small_inverse_residual,
)
from .metrics import QualityReport, psnr, ssim
from .optimizer import (
    FlipOptimizerConfig,
    PgaConfig,
    flip_optimize,
    pga_optimize,
    project_feasible,
)
from .pipeline import MeasurementSet, calibrate_epsilon, reconstruct_image, sense
from .weights import WeightVector, compute_weights, extract_patches

__version__ = "0.1.0"

__all__ = [
    "bicoherence_loss",
    "BpdnInfo",
    "BpdnSettings",
    "build_gram",
    "calibrate_epsilon",
    "coherence_loss",
    "compute_weights",
    "criterion_from_name",
    "CriterionSpec",
    "dct_dictionary",
    "Dictionary",
    "evaluate",
    "extract_patches",
    "flip_optimize",
    "flip_update",
    "FlipOptimizerConfig",
    "GramState",
    "Kind",
    "load_matrix",
    "MeasurementSet",
    "Mode",
    "mu_avg",
    "mu_max",
    "omega2",
    "pga_optimize",
    "PgaConfig",
    "project_feasible",
    "psnr",
    "QualityReport",
    "reconstruct_image",
    "save_matrix",
    "sense",
    "SensingMatrix",
    "small_inverse_residual",
    "solve_bpdn",
    "solve_bpdn_batch",
    "ssim",
    "Status",
    "tricoherence_loss",
    "WeightVector",
]
