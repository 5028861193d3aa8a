"""Ground-truth cluster generators with known intrinsic dimension.

These build the noiseless (or nearly noiseless) hyperplane clusters the
estimator is supposed to recover, plus block constructions whose stacked
rank is known exactly.  They serve as the verification oracle for the
whole analysis path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HyperplaneSpec",
    "orthonormal_columns",
    "sample_hyperplane_cluster",
    "sample_independent_blocks",
    "sample_shared_subspace_blocks",
]


@dataclass(frozen=True)
class HyperplaneSpec:
    """A cluster of ``cluster_size`` points near a d-dimensional hyperplane in R^D."""

    ambient_dim: int
    intrinsic_dim: int
    cluster_size: int
    noise_scale: float = 0.0
    coefficient_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ambient_dim < 1 or self.cluster_size < 1:
            raise ValueError("ambient_dim and cluster_size must be >= 1")
        limit = min(self.ambient_dim, self.cluster_size)
        if not 1 <= self.intrinsic_dim <= limit:
            raise ValueError(
                f"intrinsic_dim must lie in [1, min(D, n)] = [1, {limit}], "
                f"got {self.intrinsic_dim}"
            )
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be >= 0")
        if self.coefficient_scale <= 0.0:
            raise ValueError("coefficient_scale must be > 0")


def orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """A seeded (rows, cols) matrix with orthonormal columns (B^T B = I)."""
    if not 1 <= cols <= rows:
        raise ValueError(f"need 1 <= cols <= rows, got ({rows}, {cols})")
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def sample_hyperplane_cluster(spec: HyperplaneSpec) -> np.ndarray:
    """A D x n cluster B @ C + eps * N concentrated on a d-dimensional plane.

    B has orthonormal columns from seeded Gaussian draws, C holds i.i.d.
    Gaussian coefficients scaled by ``coefficient_scale``, and N is i.i.d.
    unit Gaussian ambient noise.  Fully determined by the spec's seed.
    """
    rng = np.random.default_rng(spec.seed)
    basis = orthonormal_columns(rng, spec.ambient_dim, spec.intrinsic_dim)
    coeffs = spec.coefficient_scale * rng.standard_normal(
        (spec.intrinsic_dim, spec.cluster_size)
    )
    cluster = basis @ coeffs
    if spec.noise_scale > 0.0:
        cluster = cluster + spec.noise_scale * rng.standard_normal(cluster.shape)
    return cluster


def sample_independent_blocks(
    block_ranks, rows_per_block: int, n: int, seed: int = 0
) -> list[np.ndarray]:
    """Matrices of exact known rank with pairwise disjoint row spaces.

    Block i spans its own slice of coordinates of the shared n-dimensional
    column domain, so stacking any subset gives a matrix whose rank is
    exactly the sum of the block ranks.  Each block's nonzero singular
    values are its column scales, drawn uniformly from [0.5, 2].
    """
    ranks = [int(r) for r in block_ranks]
    if not ranks:
        raise ValueError("at least one block rank is required")
    for r in ranks:
        if not 1 <= r <= rows_per_block:
            raise ValueError(f"block rank {r} must lie in [1, rows_per_block={rows_per_block}]")
    if sum(ranks) > n:
        raise ValueError(f"sum of block ranks ({sum(ranks)}) exceeds column count ({n})")
    rng = np.random.default_rng(seed)
    blocks = []
    offset = 0
    for r in ranks:
        blocks.append(_coordinate_block(rng, rows_per_block, n, offset, r))
        offset += r
    return blocks


def sample_shared_subspace_blocks(
    rank: int, rows_per_block: int, n: int, count: int, seed: int = 0
) -> list[np.ndarray]:
    """Negative control: ``count`` rank-``rank`` blocks sharing one row space.

    Every block spans the same leading coordinate slice, so the stacked
    rank stays ``rank`` while the per-block ranks sum to ``count * rank``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 1 <= rank <= min(rows_per_block, n):
        raise ValueError(f"rank {rank} must lie in [1, min(rows_per_block, n)]")
    rng = np.random.default_rng(seed)
    return [
        _coordinate_block(rng, rows_per_block, n, 0, rank) for _ in range(count)
    ]


def _coordinate_block(
    rng: np.random.Generator, rows: int, n: int, offset: int, rank: int
) -> np.ndarray:
    left = orthonormal_columns(rng, rows, rank)
    scales = rng.uniform(0.5, 2.0, rank)
    block = np.zeros((rows, n))
    block[:, offset : offset + rank] = left * scales
    return block
