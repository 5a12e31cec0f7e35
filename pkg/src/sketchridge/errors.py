"""Exception types raised by sketchridge."""

from __future__ import annotations


class SketchRidgeError(Exception):
    """Base class for all package errors."""


class InvalidInput(SketchRidgeError, ValueError):
    """Input array is malformed (non-finite entries, wrong shape)."""


class DimensionMismatch(InvalidInput):
    """Operands have incompatible shapes."""


class InvalidSparsity(InvalidInput):
    """Sparsity parameter s is below 1."""


class InvalidLambda(InvalidInput):
    """Penalty is outside the range an operation supports."""


class InstanceTooLarge(InvalidInput):
    """Requested check would materialize objects that are too large."""


class SingularSystem(SketchRidgeError, ArithmeticError):
    """A solve was requested at lambda=0 on a rank-deficient matrix."""


class DegenerateGcv(SketchRidgeError, ArithmeticError):
    """GCV is undefined because df >= n (saturated fit)."""


class NoValidLambda(SketchRidgeError, ArithmeticError):
    """Every candidate record on a grid is degenerate."""
