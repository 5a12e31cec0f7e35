"""Ridge regression on randomly compressed data."""

from __future__ import annotations

from .errors import (
    DegenerateGcv,
    DimensionMismatch,
    InstanceTooLarge,
    InvalidInput,
    InvalidLambda,
    InvalidSparsity,
    NoValidLambda,
    SingularSystem,
    SketchRidgeError,
)
from .estimators import (
    CompressedDesign,
    Dataset,
    FitResult,
    PathResult,
    build_compressed,
    combine,
    fit_combo,
    fit_fc,
    fit_ols,
    fit_path,
    fit_pc,
    fit_ridge,
    predict,
)
from .linalg import SpectralShrinker, ThinSvd, regularized_inverse_apply, thin_svd
from .sketch import SketchSpec, SparseSketch, apply_sketch, generate_sketch, identity_sketch

__version__ = "0.1.0"

__all__ = [
    "CompressedDesign",
    "Dataset",
    "DegenerateGcv",
    "DimensionMismatch",
    "FitResult",
    "InstanceTooLarge",
    "InvalidInput",
    "InvalidLambda",
    "InvalidSparsity",
    "NoValidLambda",
    "PathResult",
    "SingularSystem",
    "SketchRidgeError",
    "SketchSpec",
    "SparseSketch",
    "SpectralShrinker",
    "ThinSvd",
    "apply_sketch",
    "build_compressed",
    "combine",
    "fit_combo",
    "fit_fc",
    "fit_ols",
    "fit_path",
    "fit_pc",
    "fit_ridge",
    "generate_sketch",
    "identity_sketch",
    "predict",
    "regularized_inverse_apply",
    "thin_svd",
]
