"""Layer activation tensors and the per-map dimension calculus.

One layer's activations over a cluster of n inputs form an (n, C, H, W)
tensor.  Each channel yields an (H*W) x n matrix whose drop dimension is
estimated on its own; summing those gives the estimated dimension of the
chosen maps, stacking the matrices before the decomposition gives the
concatenated dimension, and stacking all C maps gives the original
dimension of the layer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import singular_values
from .spectrum import DEFAULT_THETA, detect_drop

__all__ = [
    "LayerActivations",
    "DimensionSummary",
    "LayerAnalysis",
    "feature_map_matrix",
    "concatenate_maps",
    "estimated_dimension",
    "concatenated_dimension",
    "original_dimension",
    "analyze_layer",
]


@dataclass(frozen=True)
class LayerActivations:
    """Activations of one layer over a cluster, indexed [sample, channel, row, col].

    Fully connected layers use the (n, 1, units, 1) convention, so their
    channel count is 1 and the three dimension notions coincide.  The
    tensor is treated as immutable after construction.
    """

    layer_name: str
    data: np.ndarray

    def __post_init__(self) -> None:
        if not self.layer_name:
            raise ValueError("layer_name must be non-empty")
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 4:
            raise ValueError("data must be an (n, C, H, W) ndarray")
        if min(d.shape) < 1:
            raise ValueError(f"all tensor dimensions must be >= 1, got shape {d.shape}")
        if not np.issubdtype(d.dtype, np.floating):
            raise ValueError(f"data must be floating point, got dtype {d.dtype}")
        if not np.all(np.isfinite(d)):
            raise ValueError("activation values must be finite")

    @property
    def cluster_size(self) -> int:
        return int(self.data.shape[0])

    @property
    def channels(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[2])

    @property
    def width(self) -> int:
        return int(self.data.shape[3])

    @property
    def space_dim(self) -> int:
        """Dimension of the layer's activation space: H * W * C."""
        return self.channels * self.height * self.width

    @property
    def map_dim(self) -> int:
        """Row count of a single feature-map matrix: H * W."""
        return self.height * self.width


@dataclass(frozen=True)
class DimensionSummary:
    """Per-map dimensions of one layer plus the derived totals.

    ``estimated`` is definitionally the sum of ``per_map_dimensions`` and is
    validated at construction.  ``concatenated`` and ``original`` are filled
    only when requested.
    """

    layer_name: str
    map_indices: tuple[int, ...]
    per_map_dimensions: tuple[int, ...]
    estimated: int
    concatenated: int | None
    original: int | None
    theta: float
    cluster_size: int

    def __post_init__(self) -> None:
        if len(self.map_indices) != len(self.per_map_dimensions):
            raise ValueError("map_indices and per_map_dimensions must align")
        if self.estimated != sum(self.per_map_dimensions):
            raise ValueError(
                f"estimated ({self.estimated}) must equal the per-map sum "
                f"({sum(self.per_map_dimensions)})"
            )


@dataclass(frozen=True, eq=False)
class LayerAnalysis:
    """A DimensionSummary plus the singular spectra behind it, when kept.

    Spectra are keyed ``"map:<index>"`` for per-map matrices and
    ``"concatenated"`` / ``"original"`` for the stacked ones.
    """

    summary: DimensionSummary
    spectra: dict[str, np.ndarray]


def feature_map_matrix(acts: LayerActivations, map_index: int) -> np.ndarray:
    """The (H*W) x n matrix of one channel; column s is sample s's map, row-major."""
    if not 0 <= map_index < acts.channels:
        raise IndexError(
            f"map index {map_index} out of range for {acts.channels} channels"
        )
    n = acts.cluster_size
    return acts.data[:, map_index].reshape(n, -1).T.astype(np.float64)


def concatenate_maps(acts: LayerActivations, map_indices: Sequence[int]) -> np.ndarray:
    """Vertical stack of the chosen per-map matrices: (k*H*W) x n."""
    idx = _checked_indices(acts, map_indices)
    return np.vstack([feature_map_matrix(acts, i) for i in idx])


def estimated_dimension(
    acts: LayerActivations,
    map_indices: Sequence[int],
    theta: float = DEFAULT_THETA,
    *,
    center: bool = False,
    workers: int = 1,
) -> DimensionSummary:
    """Drop dimension of every chosen map plus their sum."""
    analysis = analyze_layer(
        acts, map_indices, theta, center=center, workers=workers
    )
    return analysis.summary


def concatenated_dimension(
    acts: LayerActivations,
    map_indices: Sequence[int],
    theta: float = DEFAULT_THETA,
    *,
    center: bool = False,
) -> int:
    """Drop dimension of the vertically stacked matrix of the chosen maps."""
    idx = _checked_indices(acts, map_indices)
    _validate_theta(theta)
    matrix = _prepared(concatenate_maps(acts, idx), center)
    return detect_drop(singular_values(matrix), theta).dimension


def original_dimension(
    acts: LayerActivations, theta: float = DEFAULT_THETA, *, center: bool = False
) -> int:
    """Concatenated dimension over all C maps of the layer."""
    return concatenated_dimension(acts, range(acts.channels), theta, center=center)


def analyze_layer(
    acts: LayerActivations,
    map_indices: Sequence[int] | None = None,
    theta: float = DEFAULT_THETA,
    *,
    include_concatenated: bool = False,
    include_original: bool = False,
    center: bool = False,
    workers: int = 1,
    keep_spectra: bool = False,
) -> LayerAnalysis:
    """Full per-layer analysis: per-map dimensions and optional stacked totals.

    ``map_indices`` defaults to every channel.  Per-map decompositions are
    independent; ``workers`` > 1 fans them out to a thread pool with results
    keyed by map index, so the outcome never depends on scheduling.  When all
    maps are selected the original equals the concatenated dimension and is
    computed once.
    """
    idx = _checked_indices(
        acts, range(acts.channels) if map_indices is None else map_indices
    )
    _validate_theta(theta)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    def map_spectrum(i: int) -> np.ndarray:
        return singular_values(_prepared(feature_map_matrix(acts, i), center))

    if workers > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(map_spectrum, idx))
    else:
        spectra = [map_spectrum(i) for i in idx]
    per_map = tuple(detect_drop(s, theta).dimension for s in spectra)

    kept: dict[str, np.ndarray] = {}
    if keep_spectra:
        kept.update({f"map:{i}": s for i, s in zip(idx, spectra)})

    covers_all = sorted(idx) == list(range(acts.channels))
    concatenated = original = None
    if include_concatenated or include_original:
        stacked = singular_values(_prepared(concatenate_maps(acts, idx), center))
        stacked_dim = detect_drop(stacked, theta).dimension
        if include_concatenated:
            concatenated = stacked_dim
            if keep_spectra:
                kept["concatenated"] = stacked
        if include_original:
            if covers_all:
                original = stacked_dim
                if keep_spectra:
                    kept["original"] = stacked
            else:
                full = singular_values(
                    _prepared(concatenate_maps(acts, range(acts.channels)), center)
                )
                original = detect_drop(full, theta).dimension
                if keep_spectra:
                    kept["original"] = full

    summary = DimensionSummary(
        layer_name=acts.layer_name,
        map_indices=idx,
        per_map_dimensions=per_map,
        estimated=sum(per_map),
        concatenated=concatenated,
        original=original,
        theta=float(theta),
        cluster_size=acts.cluster_size,
    )
    return LayerAnalysis(summary=summary, spectra=kept)


def _checked_indices(acts: LayerActivations, map_indices) -> tuple[int, ...]:
    idx = tuple(int(i) for i in map_indices)
    if not idx:
        raise ValueError("at least one map index is required")
    for i in idx:
        if not 0 <= i < acts.channels:
            raise IndexError(f"map index {i} out of range for {acts.channels} channels")
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate map indices: {sorted(idx)}")
    return idx


def _validate_theta(theta: float) -> None:
    if not theta > 1.0:
        raise ValueError(f"theta must exceed 1, got {theta}")


def _prepared(matrix: np.ndarray, center: bool) -> np.ndarray:
    # centering subtracts the cluster-mean activation vector from every column
    return matrix - matrix.mean(axis=1, keepdims=True) if center else matrix
