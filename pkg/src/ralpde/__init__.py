"""Identify governing PDEs from spatiotemporal data.

The pipeline has three stages: automatic Savitzky-Golay differentiation
(:mod:`ralpde.smoothdiff`), candidate-library construction
(:mod:`ralpde.library`) and sparse regression with the recurrent adaptive
lasso (:mod:`ralpde.regress`).  :mod:`ralpde.datagen` and
:mod:`ralpde.bench` generate benchmark data and score identification runs.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (
    DesignMatrix,
    Field,
    FieldFormatError,
    SparseModel,
    TermDescriptor,
    field_read,
    field_write,
    parse_term,
    unvectorize,
    vectorize,
)
from .library import LibrarySpec, assemble, complexify, enumerate_terms, subsample_rows
from .regress import identify, recurrent_adaptive_lasso, stridge
from .smoothdiff import DerivativeSet, SGConfig, auto_tune_sg, compute_derivatives, gaussian_blur

__all__ = [
    "__version__",
    "DesignMatrix", "Field", "FieldFormatError", "SparseModel", "TermDescriptor",
    "field_read", "field_write", "parse_term", "unvectorize", "vectorize",
    "LibrarySpec", "assemble", "complexify", "enumerate_terms", "subsample_rows",
    "identify", "recurrent_adaptive_lasso", "stridge",
    "DerivativeSet", "SGConfig", "auto_tune_sg", "compute_derivatives", "gaussian_blur",
]
