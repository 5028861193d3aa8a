"""Two-pass streaming export: confidence filter, then per-layer capture.

Pass one runs the whole cluster through the network and keeps the indices
whose target-class probability clears the threshold.  Pass two re-runs
only the survivors with forward hooks on the requested layers, appending
each batch straight to the per-layer ACTV writers, so memory stays at
batch size regardless of the cluster or layer size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .formats import ActvWriter, read_ppm, write_manifest
from .vgg19 import (
    LAYER_DIMS,
    LAYER_NAMES,
    PREPROCESSING_RECIPE,
    build_model,
    preprocess,
    tapped_module,
)


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    """One export run over a directory of cluster PPM images."""

    image_dir: Path
    output_dir: Path
    class_index: int
    layers: tuple[str, ...] = LAYER_NAMES
    confidence_threshold: float = 0.99
    batch_size: int = 8
    weights: str = "imagenet"

    def __post_init__(self) -> None:
        self.image_dir = Path(self.image_dir)
        self.output_dir = Path(self.output_dir)
        unknown = [name for name in self.layers if name not in LAYER_DIMS]
        if unknown:
            raise ExportError(f"unknown layer names: {unknown} (known: {list(LAYER_NAMES)})")
        if not self.layers:
            raise ExportError("at least one layer is required")
        if not 0.0 <= self.confidence_threshold < 1.0:
            raise ExportError(
                f"confidence threshold must lie in [0, 1), got {self.confidence_threshold}"
            )
        if self.batch_size < 1:
            raise ExportError("batch size must be >= 1")


def export_activations(job: ExportJob) -> Path:
    """Run the job; returns the path of the written manifest."""
    image_paths = sorted(job.image_dir.glob("*.ppm"))
    if not image_paths:
        raise ExportError(f"no .ppm images found in {job.image_dir}")
    model = build_model(job.weights)

    survivors, excluded = _confidence_filter(model, image_paths, job)
    if not survivors:
        raise ExportError(
            f"no samples reached probability > {job.confidence_threshold} "
            f"for class {job.class_index}; nothing written"
        )

    job.output_dir.mkdir(parents=True, exist_ok=True)
    writers = {
        name: ActvWriter(
            job.output_dir / f"{name}.actv", name, len(survivors), *LAYER_DIMS[name]
        )
        for name in job.layers
    }
    captures: dict[str, np.ndarray] = {}
    hooks = []

    def tap(name):
        def hook(module, inputs, output):
            captures[name] = output.detach().numpy()

        return hook

    for name in job.layers:
        hooks.append(tapped_module(model, name).register_forward_hook(tap(name)))
    try:
        with torch.no_grad():
            for start in range(0, len(survivors), job.batch_size):
                chunk = survivors[start : start + job.batch_size]
                batch = np.stack([read_ppm(image_paths[i]) for i in chunk])
                model(preprocess(batch))
                for name in job.layers:
                    arr = captures.pop(name)
                    if arr.ndim == 2:  # fully connected: (b, units) -> (b, 1, units, 1)
                        arr = arr[:, None, :, None]
                    writers[name].append(arr)
    finally:
        for hook in hooks:
            hook.remove()
    for writer in writers.values():
        writer.close()

    manifest_path = job.output_dir / "manifest.json"
    write_manifest(
        manifest_path,
        network="vgg19",
        augmentation=_cluster_provenance(job.image_dir),
        cluster_size=len(survivors),
        confidence_threshold=job.confidence_threshold,
        class_index=job.class_index,
        activations=[(name, f"{name}.actv") for name in job.layers],
        excluded_indices=excluded,
        preprocessing=dict(PREPROCESSING_RECIPE, weights=job.weights),
    )
    return manifest_path


def _confidence_filter(model, image_paths, job: ExportJob):
    probs = np.empty(len(image_paths), dtype=np.float64)
    with torch.no_grad():
        for start in range(0, len(image_paths), job.batch_size):
            paths = image_paths[start : start + job.batch_size]
            batch = np.stack([read_ppm(p) for p in paths])
            logits = model(preprocess(batch))
            if not 0 <= job.class_index < logits.shape[1]:
                raise ExportError(
                    f"class index {job.class_index} out of range for {logits.shape[1]} classes"
                )
            p = torch.softmax(logits.double(), dim=1)[:, job.class_index]
            probs[start : start + len(paths)] = p.numpy()
    survivors = [i for i, p in enumerate(probs) if p > job.confidence_threshold]
    excluded = [i for i in range(len(image_paths)) if i not in set(survivors)]
    return survivors, excluded


def _cluster_provenance(image_dir: Path) -> dict | None:
    """Augmentation config recorded by the analyzer's cluster generator, if present."""
    meta = image_dir / "cluster.json"
    if not meta.is_file():
        return None
    try:
        doc = json.loads(meta.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    return doc.get("augmentation")
