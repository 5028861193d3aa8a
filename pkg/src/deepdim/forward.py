"""A small deterministic CNN inference engine for VGG-style stacks.

The layer vocabulary is exactly what that family needs: 3x3 stride-1
pad-1 convolutions with ReLU, 2x2 stride-2 max pooling, dense layers with
optional ReLU, and one softmax head.  Weights and stored activations are
32-bit, dot products accumulate in 64-bit, and each layer's output is
rounded back to 32-bit, so a forward pass is bit-reproducible regardless
of batching.  Inference only; there is no training path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .activations import LayerActivations
from .augment import check_image

__all__ = [
    "ConvLayer",
    "MaxPoolLayer",
    "DenseLayer",
    "SoftmaxLayer",
    "NetworkSpec",
    "Weights",
    "SeedImageRejectedError",
    "layer_shapes",
    "activation_space_dims",
    "seeded_random_weights",
    "forward_collect",
    "classify",
    "predict_probabilities",
    "filter_by_confidence",
    "vgg19_spec",
    "network_to_dict",
    "network_from_dict",
    "write_network",
    "read_network",
]

NETWORK_FORMAT = "deepdim-network"
NETWORK_VERSION = 1


@dataclass(frozen=True)
class ConvLayer:
    """3x3 convolution, stride 1, zero padding 1, followed by ReLU."""

    name: str
    filters: int


@dataclass(frozen=True)
class MaxPoolLayer:
    """2x2 max pooling with stride 2; halves both spatial sides."""

    name: str


@dataclass(frozen=True)
class DenseLayer:
    name: str
    units: int
    relu: bool = True


@dataclass(frozen=True)
class SoftmaxLayer:
    """Classification head over the preceding dense layer's logits."""

    name: str


Layer = ConvLayer | MaxPoolLayer | DenseLayer | SoftmaxLayer


@dataclass(frozen=True)
class NetworkSpec:
    """An ordered, named layer stack with a fixed input shape.

    Construction validates the whole shape chain, so an instance is always
    a runnable network.
    """

    name: str
    input_height: int
    input_width: int
    input_channels: int
    layers: tuple[Layer, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        layer_shapes(self)

    def layer_names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def has_softmax_head(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], SoftmaxLayer)


@dataclass(frozen=True, eq=False)
class Weights:
    """Float32 parameters per layer.

    Conv kernels are (filters, in_channels, 3, 3), dense weights
    (units, in_features), biases 1-D.  Immutable after load.
    """

    kernels: Mapping[str, np.ndarray]
    biases: Mapping[str, np.ndarray]


class SeedImageRejectedError(RuntimeError):
    """The original image itself failed the confidence filter."""


def layer_shapes(net: NetworkSpec) -> dict[str, tuple[int, ...]]:
    """Activation shape after every layer: (H, W, C) or (units,).

    Raises ValueError for inconsistent chains: odd spatial sides at a
    pooling layer, convolutions after flattening, a softmax anywhere but
    directly after the final dense layer, or duplicate/empty names.
    """
    if min(net.input_height, net.input_width, net.input_channels) < 1:
        raise ValueError("network input dimensions must be >= 1")
    if not net.layers:
        raise ValueError("network needs at least one layer")
    shapes: dict[str, tuple[int, ...]] = {}
    spatial: tuple[int, int, int] | None = (
        net.input_height,
        net.input_width,
        net.input_channels,
    )
    flat_units: int | None = None
    prev: Layer | None = None
    for pos, layer in enumerate(net.layers):
        if not layer.name:
            raise ValueError("every layer needs a non-empty name")
        if layer.name in shapes:
            raise ValueError(f"duplicate layer name {layer.name!r}")
        if isinstance(layer, ConvLayer):
            if spatial is None:
                raise ValueError(f"conv layer {layer.name!r} cannot follow a dense layer")
            if layer.filters < 1:
                raise ValueError(f"conv layer {layer.name!r} needs filters >= 1")
            h, w, _ = spatial
            spatial = (h, w, layer.filters)
            shapes[layer.name] = spatial
        elif isinstance(layer, MaxPoolLayer):
            if spatial is None:
                raise ValueError(f"pool layer {layer.name!r} cannot follow a dense layer")
            h, w, c = spatial
            if h % 2 or w % 2:
                raise ValueError(
                    f"pool layer {layer.name!r} needs even spatial sides, got {h}x{w}"
                )
            spatial = (h // 2, w // 2, c)
            shapes[layer.name] = spatial
        elif isinstance(layer, DenseLayer):
            if layer.units < 1:
                raise ValueError(f"dense layer {layer.name!r} needs units >= 1")
            flat_units = layer.units
            spatial = None
            shapes[layer.name] = (layer.units,)
        elif isinstance(layer, SoftmaxLayer):
            if pos != len(net.layers) - 1:
                raise ValueError("softmax must be the final layer")
            if not isinstance(prev, DenseLayer):
                raise ValueError("softmax must follow a dense layer")
            shapes[layer.name] = (flat_units,)
        else:
            raise ValueError(f"unsupported layer type {type(layer).__name__}")
        prev = layer
    return shapes


def activation_space_dims(net: NetworkSpec) -> dict[str, int]:
    """Flattened activation-space dimension (H*W*C or units) per layer."""
    return {name: int(np.prod(shape)) for name, shape in layer_shapes(net).items()}


def seeded_random_weights(net: NetworkSpec, seed: int) -> Weights:
    """Deterministic float32 weights with variance-preserving fan-in scaling.

    Gaussian kernels scaled by sqrt(2 / fan_in) keep activation magnitudes
    stable across the short stacks this engine runs; biases start at zero.
    """
    rng = np.random.default_rng(int(seed))
    kernels: dict[str, np.ndarray] = {}
    biases: dict[str, np.ndarray] = {}
    in_spatial_c = net.input_channels
    in_features = net.input_height * net.input_width * net.input_channels
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            std = math.sqrt(2.0 / (9.0 * in_spatial_c))
            kernels[layer.name] = (
                rng.standard_normal((layer.filters, in_spatial_c, 3, 3)) * std
            ).astype(np.float32)
            biases[layer.name] = np.zeros(layer.filters, dtype=np.float32)
            in_spatial_c = layer.filters
            in_features = None
        elif isinstance(layer, MaxPoolLayer):
            in_features = None
        elif isinstance(layer, DenseLayer):
            if in_features is None:
                shape = _shape_before(net, layer.name)
                in_features = int(np.prod(shape))
            std = math.sqrt(2.0 / in_features)
            kernels[layer.name] = (
                rng.standard_normal((layer.units, in_features)) * std
            ).astype(np.float32)
            biases[layer.name] = np.zeros(layer.units, dtype=np.float32)
            in_features = layer.units
    return Weights(kernels=kernels, biases=biases)


def forward_collect(
    net: NetworkSpec,
    weights: Weights,
    images: Sequence[np.ndarray],
    layer_names: Sequence[str],
) -> dict[str, LayerActivations]:
    """Run the batch and return post-activation tensors for the named layers.

    Conv and dense activations are taken after ReLU, pooling layers after
    the pool.  Dense outputs use the (n, 1, units, 1) convention.  Results
    are keyed by layer name in network order.
    """
    wanted = _checked_layer_names(net, layer_names)
    batch = _image_batch(net, images)
    collected, _ = _forward(net, weights, batch, wanted)
    out: dict[str, LayerActivations] = {}
    for layer in net.layers:
        if layer.name not in collected:
            continue
        arr = collected[layer.name]
        if arr.ndim == 2:  # dense or softmax: (n, units) -> (n, 1, units, 1)
            arr = arr[:, None, :, None]
        out[layer.name] = LayerActivations(layer.name, arr)
    return out


def classify(net: NetworkSpec, weights: Weights, image) -> np.ndarray:
    """Class probability vector for one image; requires a softmax head."""
    return predict_probabilities(net, weights, [image])[0]


def predict_probabilities(
    net: NetworkSpec, weights: Weights, images: Sequence[np.ndarray]
) -> np.ndarray:
    """Per-sample class probabilities as an (n, classes) float64 array."""
    if not net.has_softmax_head():
        raise ValueError(f"network {net.name!r} has no softmax head")
    batch = _image_batch(net, images)
    _, probs = _forward(net, weights, batch, frozenset())
    return probs


def filter_by_confidence(
    net: NetworkSpec,
    weights: Weights,
    images: Sequence[np.ndarray],
    class_index: int,
    threshold: float = 0.99,
) -> list[int]:
    """Indices whose probability for ``class_index`` strictly exceeds ``threshold``.

    The original image is element 0 and must qualify; otherwise the whole
    cluster is unusable and SeedImageRejectedError is raised.  A threshold
    of 0 is the degenerate keep-everything setting used by tests.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {threshold}")
    probs = predict_probabilities(net, weights, images)
    if not 0 <= class_index < probs.shape[1]:
        raise ValueError(
            f"class index {class_index} out of range for {probs.shape[1]} classes"
        )
    kept = np.nonzero(probs[:, class_index] > threshold)[0]
    if kept.size == 0 or kept[0] != 0:
        raise SeedImageRejectedError(
            f"original image has probability {probs[0, class_index]:.6g} "
            f"for class {class_index}, below threshold {threshold}"
        )
    return [int(i) for i in kept]


def vgg19_spec() -> NetworkSpec:
    """The classic VGG19 stack: five conv blocks, five pools, three dense layers."""
    layers: list[Layer] = []
    for block, (filters, repeats) in enumerate(
        ((64, 2), (128, 2), (256, 4), (512, 4), (512, 4)), start=1
    ):
        for rep in range(1, repeats + 1):
            layers.append(ConvLayer(f"conv{block}_{rep}", filters))
        layers.append(MaxPoolLayer(f"maxpooling{block}"))
    layers += [
        DenseLayer("fc6", 4096),
        DenseLayer("fc7", 4096),
        DenseLayer("fc8", 1000, relu=False),
        SoftmaxLayer("prob"),
    ]
    return NetworkSpec("vgg19", 224, 224, 3, tuple(layers))


# ---------------------------------------------------------------------------
# JSON serialization


def network_to_dict(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            layers.append({"type": "conv", "name": layer.name, "filters": layer.filters})
        elif isinstance(layer, MaxPoolLayer):
            layers.append({"type": "maxpool", "name": layer.name})
        elif isinstance(layer, DenseLayer):
            layers.append(
                {"type": "dense", "name": layer.name, "units": layer.units, "relu": layer.relu}
            )
        else:
            layers.append({"type": "softmax", "name": layer.name})
    return {
        "format": NETWORK_FORMAT,
        "version": NETWORK_VERSION,
        "name": net.name,
        "input": {
            "height": net.input_height,
            "width": net.input_width,
            "channels": net.input_channels,
        },
        "layers": layers,
        "shapes": {name: list(shape) for name, shape in layer_shapes(net).items()},
    }


def network_from_dict(doc: dict) -> NetworkSpec:
    if doc.get("format") != NETWORK_FORMAT:
        raise ValueError(f"not a network document (format={doc.get('format')!r})")
    if doc.get("version") != NETWORK_VERSION:
        raise ValueError(f"unsupported network document version {doc.get('version')!r}")
    inp = doc["input"]
    layers: list[Layer] = []
    for entry in doc["layers"]:
        kind = entry.get("type")
        name = entry.get("name", "")
        if kind == "conv":
            layers.append(ConvLayer(name, int(entry["filters"])))
        elif kind == "maxpool":
            layers.append(MaxPoolLayer(name))
        elif kind == "dense":
            layers.append(DenseLayer(name, int(entry["units"]), bool(entry.get("relu", True))))
        elif kind == "softmax":
            layers.append(SoftmaxLayer(name))
        else:
            raise ValueError(f"unknown layer type {kind!r}")
    net = NetworkSpec(
        name=str(doc.get("name", "network")),
        input_height=int(inp["height"]),
        input_width=int(inp["width"]),
        input_channels=int(inp["channels"]),
        layers=tuple(layers),
    )
    declared = doc.get("shapes")
    if declared is not None:
        computed = {name: list(shape) for name, shape in layer_shapes(net).items()}
        if declared != computed:
            raise ValueError("declared layer shapes disagree with the layer chain")
    return net


def write_network(net: NetworkSpec, path) -> None:
    text = json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_network(path) -> NetworkSpec:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Engine internals


def _forward(
    net: NetworkSpec,
    weights: Weights,
    batch: np.ndarray,
    collect: frozenset[str] | set[str],
):
    """Run the chain over a (n, C, H, W) float32 batch.

    Returns (collected arrays by layer name, softmax probabilities or None).
    """
    _validate_weights(net, weights)
    collected: dict[str, np.ndarray] = {}
    x = batch
    flat: np.ndarray | None = None
    probs: np.ndarray | None = None
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            pre = _conv3x3(x, weights.kernels[layer.name], weights.biases[layer.name])
            x = np.maximum(pre, 0.0).astype(np.float32)
            flat = None
            out: np.ndarray = x
        elif isinstance(layer, MaxPoolLayer):
            x = _maxpool2x2(x)
            flat = None
            out = x
        elif isinstance(layer, DenseLayer):
            if flat is None:
                flat = x.reshape(x.shape[0], -1)
            z = _dense(flat, weights.kernels[layer.name], weights.biases[layer.name])
            if layer.relu:
                z = np.maximum(z, 0.0)
            flat = z.astype(np.float32)
            out = flat
        else:  # softmax head
            probs = _softmax(flat.astype(np.float64))
            out = probs
        if layer.name in collect:
            collected[layer.name] = out
    return collected, probs


def _conv3x3(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Pad-1 stride-1 3x3 convolution; float64 accumulation, pre-activation output."""
    n, c, h, w = x.shape
    padded = np.zeros((n, c, h + 2, w + 2), dtype=np.float64)
    padded[:, :, 1:-1, 1:-1] = x
    k64 = kernel.astype(np.float64)
    acc = np.zeros((n, kernel.shape[0], h, w), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            acc += np.einsum(
                "nchw,fc->nfhw", padded[:, :, di : di + h, dj : dj + w], k64[:, :, di, dj]
            )
    return acc + bias.astype(np.float64)[None, :, None, None]


def _maxpool2x2(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def _dense(flat: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return flat.astype(np.float64) @ weight.astype(np.float64).T + bias.astype(np.float64)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _image_batch(net: NetworkSpec, images: Sequence[np.ndarray]) -> np.ndarray:
    if len(images) == 0:
        raise ValueError("at least one image is required")
    if net.input_channels != 3:
        raise ValueError("image batches require a 3-channel network input")
    arrs = []
    for img in images:
        a = check_image(img)
        if a.shape[:2] != (net.input_height, net.input_width):
            raise ValueError(
                f"image shape {a.shape[:2]} does not match network input "
                f"{(net.input_height, net.input_width)}"
            )
        arrs.append(a.transpose(2, 0, 1))
    return np.stack(arrs).astype(np.float32)


def _checked_layer_names(net: NetworkSpec, layer_names: Sequence[str]) -> set[str]:
    known = set(net.layer_names())
    wanted = set(layer_names)
    unknown = wanted - known
    if unknown:
        raise ValueError(f"unknown layer names: {sorted(unknown)}")
    if not wanted:
        raise ValueError("at least one layer name is required")
    return wanted


def _shape_before(net: NetworkSpec, name: str) -> tuple[int, ...]:
    shape: tuple[int, ...] = (net.input_height, net.input_width, net.input_channels)
    shapes = layer_shapes(net)
    for layer in net.layers:
        if layer.name == name:
            return shape
        shape = shapes[layer.name]
    raise KeyError(name)


def _validate_weights(net: NetworkSpec, weights: Weights) -> None:
    in_c = net.input_channels
    in_features = net.input_height * net.input_width * net.input_channels
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            k = weights.kernels.get(layer.name)
            b = weights.biases.get(layer.name)
            expected = (layer.filters, in_c, 3, 3)
            _check_tensor(layer.name, k, expected)
            _check_tensor(layer.name, b, (layer.filters,))
            in_c = layer.filters
            in_features = None
        elif isinstance(layer, DenseLayer):
            if in_features is None:
                in_features = int(np.prod(_shape_before(net, layer.name)))
            k = weights.kernels.get(layer.name)
            b = weights.biases.get(layer.name)
            _check_tensor(layer.name, k, (layer.units, in_features))
            _check_tensor(layer.name, b, (layer.units,))
            in_features = layer.units


def _check_tensor(name: str, arr, expected_shape: tuple[int, ...]) -> None:
    if arr is None:
        raise ValueError(f"missing weights for layer {name!r}")
    if arr.shape != expected_shape:
        raise ValueError(
            f"layer {name!r} weights have shape {arr.shape}, expected {expected_shape}"
        )
    if arr.dtype != np.float32:
        raise ValueError(f"layer {name!r} weights must be float32, got {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"layer {name!r} weights must be finite")
