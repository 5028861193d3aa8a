"""Command line for the exporter: mirror ExportJob as flags."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportJob, export_activations
from .vgg19 import LAYER_NAMES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepdim-export",
        description="Run VGG19 over a cluster of PPM images and write ACTV activation files.",
    )
    parser.add_argument("--images", required=True, help="directory of cluster .ppm files")
    parser.add_argument("--out", required=True, help="output directory for ACTV files + manifest")
    parser.add_argument("--class-index", type=int, required=True, help="target class (0..999)")
    parser.add_argument(
        "--layers",
        default=",".join(LAYER_NAMES),
        help="comma-separated layer names (default: all)",
    )
    parser.add_argument("--threshold", type=float, default=0.99, help="confidence filter")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument(
        "--weights",
        default="imagenet",
        help="'imagenet', 'random', or a path to a VGG19 state dict",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    layers = tuple(name.strip() for name in args.layers.split(",") if name.strip())
    try:
        job = ExportJob(
            image_dir=args.images,
            output_dir=args.out,
            class_index=args.class_index,
            layers=layers,
            confidence_threshold=args.threshold,
            batch_size=args.batch_size,
            weights=args.weights,
        )
        manifest = export_activations(job)
    except ExportError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
