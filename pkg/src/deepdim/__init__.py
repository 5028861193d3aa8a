"""deepdim: estimate the local dimension of activation clusters from their singular spectra."""

from .linalg import gram_eigen_oracle, numerical_rank, singular_values
from .spectrum import DEFAULT_THETA, DropReport, detect_drop, log_spectrum
from .activations import (
    DimensionSummary,
    LayerActivations,
    analyze_layer,
    concatenate_maps,
    concatenated_dimension,
    estimated_dimension,
    feature_map_matrix,
    original_dimension,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_THETA",
    "DimensionSummary",
    "DropReport",
    "LayerActivations",
    "analyze_layer",
    "concatenate_maps",
    "concatenated_dimension",
    "detect_drop",
    "estimated_dimension",
    "feature_map_matrix",
    "gram_eigen_oracle",
    "log_spectrum",
    "numerical_rank",
    "original_dimension",
    "singular_values",
]
