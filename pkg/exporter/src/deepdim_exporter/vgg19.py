"""VGG19 layer taps and preprocessing for activation capture.

Layers are named conv<block>_<rep>, maxpooling<block>, fc6/fc7/fc8.  Conv
and fc6/fc7 taps sit after the ReLU; fc8 taps the final logits.  The dims
table gives the (C, H, W) every capture must have at the standard
224 x 224 input resolution.
"""

from __future__ import annotations

import numpy as np
import torch
from torchvision.models import vgg19

# (C, H, W) per named layer; fully connected layers use (1, units, 1).
LAYER_DIMS: dict[str, tuple[int, int, int]] = {}
# module index inside vgg19().features / .classifier to hook, post-ReLU
LAYER_TAPS: dict[str, tuple[str, int]] = {}


def _build_tables() -> None:
    blocks = ((64, 2), (128, 2), (256, 4), (512, 4), (512, 4))
    side = 224
    feature_index = 0
    for block, (channels, repeats) in enumerate(blocks, start=1):
        for rep in range(1, repeats + 1):
            LAYER_TAPS[f"conv{block}_{rep}"] = ("features", feature_index + 1)
            LAYER_DIMS[f"conv{block}_{rep}"] = (channels, side, side)
            feature_index += 2  # Conv2d + ReLU
        LAYER_TAPS[f"maxpooling{block}"] = ("features", feature_index)
        side //= 2
        LAYER_DIMS[f"maxpooling{block}"] = (channels, side, side)
        feature_index += 1
    LAYER_TAPS["fc6"] = ("classifier", 1)
    LAYER_TAPS["fc7"] = ("classifier", 4)
    LAYER_TAPS["fc8"] = ("classifier", 6)
    LAYER_DIMS["fc6"] = (1, 4096, 1)
    LAYER_DIMS["fc7"] = (1, 4096, 1)
    LAYER_DIMS["fc8"] = (1, 1000, 1)


_build_tables()

LAYER_NAMES = tuple(LAYER_TAPS)

INPUT_SIDE = 224
NORMALIZE_MEAN = (0.485, 0.456, 0.406)
NORMALIZE_STD = (0.229, 0.224, 0.225)

PREPROCESSING_RECIPE = {
    "resize": INPUT_SIDE,
    "interpolation": "bilinear",
    "normalize_mean": list(NORMALIZE_MEAN),
    "normalize_std": list(NORMALIZE_STD),
}


def build_model(weights: str) -> torch.nn.Module:
    """A VGG19 in eval mode: 'imagenet', 'random', or a state-dict path."""
    if weights == "imagenet":
        from torchvision.models import VGG19_Weights

        model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
    elif weights == "random":
        model = vgg19(weights=None)
    else:
        model = vgg19(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def tapped_module(model: torch.nn.Module, layer: str) -> torch.nn.Module:
    section, index = LAYER_TAPS[layer]
    return getattr(model, section)[index]


def preprocess(batch: np.ndarray) -> torch.Tensor:
    """[0, 1] float32 (b, H, W, 3) images to normalized (b, 3, 224, 224) tensors."""
    x = torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2)))
    if x.shape[2] != INPUT_SIDE or x.shape[3] != INPUT_SIDE:
        x = torch.nn.functional.interpolate(
            x, size=(INPUT_SIDE, INPUT_SIDE), mode="bilinear", align_corners=False
        )
    mean = torch.tensor(NORMALIZE_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(NORMALIZE_STD).view(1, 3, 1, 1)
    return (x - mean) / std
