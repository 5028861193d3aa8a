"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from deepdim import forward
from deepdim.activations import LayerActivations


def blocks_to_layer(blocks, name="layer") -> LayerActivations:
    """Stack per-map matrices (rows x n each) into an (n, k, rows, 1) tensor."""
    stacked = np.stack(blocks, axis=0)  # (k, rows, n)
    return LayerActivations(name, stacked.transpose(2, 0, 1)[..., None])


def tiny_network() -> forward.NetworkSpec:
    """The 16x16 three-conv two-dense stack used by the end-to-end tests."""
    return forward.NetworkSpec(
        "tiny3",
        16,
        16,
        3,
        (
            forward.ConvLayer("conv1", 3),
            forward.MaxPoolLayer("pool1"),
            forward.ConvLayer("conv2", 3),
            forward.MaxPoolLayer("pool2"),
            forward.ConvLayer("conv3", 3),
            forward.DenseLayer("fc1", 32),
            forward.DenseLayer("fc2", 10, relu=False),
            forward.SoftmaxLayer("prob"),
        ),
    )


def seed_image(height=16, width=16, seed=5) -> np.ndarray:
    """A reproducible mid-range test image (stays clear of the [0, 1] edges)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.2, 0.8, (height, width, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
