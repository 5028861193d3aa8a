"""Command-line front end: synthesis oracles, estimation, pipelines, spectra.

Exit codes are a stable contract: 0 success, 2 usage or configuration
error, 3 expectation mismatch (``synth --expect``), 4 seed image rejected
by the confidence filter.  Every subcommand is fully determined by its
flags and seeds.  DEEPDIM_THREADS caps the worker pool used for per-map
decompositions; results never depend on the worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, activations, augment, forward, storage
from .linalg import singular_values
from .spectrum import DEFAULT_THETA, detect_drop, log_spectrum
from .synthetic import HyperplaneSpec, sample_hyperplane_cluster

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISMATCH = 3
EXIT_REJECTED = 4

DEFAULT_CLUSTER_SIZE = 8000
DEFAULT_CONFIDENCE = 0.99


class CliError(Exception):
    """User-facing configuration or input problem; maps to exit code 2."""


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except forward.SeedImageRejectedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_REJECTED
    except (storage.StorageError, OSError, ValueError, IndexError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def worker_count() -> int:
    """Worker pool size: DEEPDIM_THREADS when set, else min(4, cpu count)."""
    env = os.environ.get("DEEPDIM_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise CliError(f"DEEPDIM_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise CliError("DEEPDIM_THREADS must be >= 1")
        return value
    return max(1, min(4, os.cpu_count() or 1))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepdim",
        description="Estimate local dimensions of activation clusters from singular spectra.",
    )
    parser.add_argument("--version", action="version", version=f"deepdim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "synth",
        help="generate a known-dimension hyperplane cluster and estimate it",
    )
    p.add_argument("--ambient", type=int, required=True, help="ambient dimension D")
    p.add_argument("--intrinsic", type=int, required=True, help="true hyperplane dimension d")
    p.add_argument("--n", type=int, required=True, help="cluster size")
    p.add_argument("--noise", type=float, default=0.0, help="ambient noise scale (default 0)")
    p.add_argument("--coeff-scale", type=float, default=1.0, help="coefficient scale (default 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)
    p.add_argument(
        "--expect",
        action="store_true",
        help="exit 3 unless the estimated dimension equals --intrinsic",
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate dimensions from stored activation files")
    p.add_argument("paths", nargs="*", help="ACTV activation files")
    p.add_argument("--manifest", help="run manifest listing activation files")
    _add_analysis_flags(p)
    _add_output_flags(p, default_format="json")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser(
        "pipeline",
        help="augment a seed image, run the built-in network, estimate every layer",
    )
    p.add_argument("image", help="seed image (binary PPM)")
    p.add_argument("--network", required=True, help="network description JSON")
    p.add_argument("--weights-seed", type=int, default=0, help="seed for the generated weights")
    p.add_argument("--method", choices=augment.METHODS, default="gaussian_noise")
    p.add_argument("--n", type=int, default=DEFAULT_CLUSTER_SIZE, help="cluster size (default 8000)")
    p.add_argument("--seed", type=int, default=0, help="augmentation seed")
    p.add_argument("--crop-max-strip", type=int, default=10)
    p.add_argument("--noise-mean", type=float, default=0.0)
    p.add_argument("--noise-var", type=float, default=0.01)
    p.add_argument("--rotation-max-deg", type=float, default=10.0)
    p.add_argument("--class-index", type=int, default=0)
    p.add_argument(
        "--confidence",
        type=float,
        default=DEFAULT_CONFIDENCE,
        help="keep samples classified into --class-index above this probability (default 0.99)",
    )
    p.add_argument("--save-dir", help="persist activations plus a run manifest here")
    p.add_argument("--save-images", help="write the augmented cluster as PPM files here")
    _add_analysis_flags(p)
    _add_output_flags(p, default_format="json")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("augment", help="write an augmented image cluster as PPM files")
    p.add_argument("image", help="seed image (binary PPM)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--method", choices=augment.METHODS, default="gaussian_noise")
    p.add_argument("--n", type=int, default=DEFAULT_CLUSTER_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-max-strip", type=int, default=10)
    p.add_argument("--noise-mean", type=float, default=0.0)
    p.add_argument("--noise-var", type=float, default=0.01)
    p.add_argument("--rotation-max-deg", type=float, default=10.0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("spectrum", help="dump one feature map's singular spectrum")
    p.add_argument("path", help="ACTV activation file")
    p.add_argument("--map", type=int, default=0, dest="map_index", help="feature map index")
    p.add_argument("--center", action="store_true", help="subtract the cluster mean first")
    _add_output_flags(p, default_format="csv")
    p.set_defaults(func=cmd_spectrum)

    return parser


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float, default=DEFAULT_THETA, help="drop threshold (default 1e5)")
    p.add_argument("--layers", help="comma-separated layer names to analyze")
    p.add_argument(
        "--maps",
        type=int,
        help="analyze k randomly chosen maps per layer instead of all (capped at C)",
    )
    p.add_argument("--map-seed", type=int, default=0, help="seed for the map selection")
    p.add_argument("--concat", action="store_true", help="also compute the concatenated dimension")
    p.add_argument("--original", action="store_true", help="also compute the original dimension")
    p.add_argument("--center", action="store_true", help="subtract the cluster mean before SVD")
    p.add_argument("--log-spectrum", action="store_true", help="embed log10 spectra in the report")


def _add_output_flags(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--output", help="write here instead of stdout")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    try:
        spec = HyperplaneSpec(
            ambient_dim=args.ambient,
            intrinsic_dim=args.intrinsic,
            cluster_size=args.n,
            noise_scale=args.noise,
            coefficient_scale=args.coeff_scale,
            seed=args.seed,
        )
    except ValueError as err:
        raise CliError(str(err)) from None
    _check_theta(args.theta)
    report = detect_drop(singular_values(sample_hyperplane_cluster(spec)), args.theta)
    print(f"ambient dimension: {spec.ambient_dim}")
    print(f"intrinsic dimension: {spec.intrinsic_dim}")
    print(f"cluster size: {spec.cluster_size}")
    print(f"estimated dimension: {report.dimension}")
    if report.drop_index is not None:
        print(f"drop index: {report.drop_index}")
        print(f"drop ratio: {report.drop_ratio:.6e}")
    elif report.full_space:
        print("no dramatic drop: the cluster spans its whole accessible space")
    else:
        print("degenerate all-zero spectrum")
    if args.expect and report.dimension != spec.intrinsic_dim:
        print(
            f"expectation mismatch: estimated {report.dimension}, "
            f"expected {spec.intrinsic_dim}"
        )
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_estimate(args) -> int:
    _check_theta(args.theta)
    layers = _load_layers(args)
    report = _analyze_layers(layers, args)
    _emit(storage.render_report(report, args.format), args.output)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    _check_theta(args.theta)
    if not 0.0 <= args.confidence < 1.0:
        raise CliError(f"--confidence must lie in [0, 1), got {args.confidence}")
    image = storage.read_image(args.image)
    net = forward.read_network(args.network)
    weights = forward.seeded_random_weights(net, args.weights_seed)
    cfg = _augment_config(args)
    try:
        cluster = augment.generate_cluster(image, args.n, cfg)
    except ValueError as err:
        raise CliError(str(err)) from None
    if args.save_images:
        _save_cluster_images(cluster, cfg, Path(args.save_images))

    kept = forward.filter_by_confidence(
        net, weights, cluster, args.class_index, args.confidence
    )
    survivors = [cluster[i] for i in kept]
    excluded = tuple(sorted(set(range(args.n)) - set(kept)))

    names = _pipeline_layer_names(net, args)
    acts_map = forward.forward_collect(net, weights, survivors, names)
    layers = [acts_map[name] for name in names]
    report = _analyze_layers(layers, args)

    if args.save_dir:
        out = Path(args.save_dir)
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for acts in layers:
            rel = f"{acts.layer_name}.actv"
            storage.write_activations(acts, out / rel)
            entries.append((acts.layer_name, rel))
        manifest = storage.RunManifest(
            network=str(args.network),
            augmentation=asdict(cfg),
            cluster_size=len(survivors),
            confidence_threshold=args.confidence,
            class_index=args.class_index,
            activations=tuple(entries),
            excluded_indices=excluded,
        )
        storage.write_manifest(manifest, out / "manifest.json")

    _emit(storage.render_report(report, args.format), args.output)
    return EXIT_OK


def cmd_augment(args) -> int:
    image = storage.read_image(args.image)
    cfg = _augment_config(args)
    try:
        cluster = augment.iter_cluster(image, args.n, cfg)
        _save_cluster_images(cluster, cfg, Path(args.out), n=args.n)
    except ValueError as err:
        raise CliError(str(err)) from None
    print(f"wrote {args.n} images to {args.out}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    acts = storage.read_activations(args.path)
    matrix = activations.feature_map_matrix(acts, args.map_index)
    if args.center:
        matrix = matrix - matrix.mean(axis=1, keepdims=True)
    values = singular_values(matrix)
    logs = log_spectrum(values)
    if args.format == "csv":
        lines = ["index,sigma,log10_sigma"]
        lines += [
            f"{i + 1},{float(v)!r},{float(lg)!r}"
            for i, (v, lg) in enumerate(zip(values, logs))
        ]
        text = "\n".join(lines) + "\n"
    else:
        doc = {
            "format": "deepdim-spectrum",
            "version": 1,
            "layer": acts.layer_name,
            "map_index": args.map_index,
            "rows": [[i + 1, float(v), float(lg)] for i, (v, lg) in enumerate(zip(values, logs))],
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Shared plumbing


def _check_theta(theta: float) -> None:
    if not theta > 1.0:
        raise CliError(f"--theta must exceed 1, got {theta}")


def _augment_config(args) -> augment.AugmentConfig:
    try:
        return augment.AugmentConfig(
            method=args.method,
            crop_max_strip=args.crop_max_strip,
            noise_mean=args.noise_mean,
            noise_var=args.noise_var,
            rotation_max_deg=args.rotation_max_deg,
            seed=args.seed,
        )
    except ValueError as err:
        raise CliError(str(err)) from None


def _save_cluster_images(cluster, cfg: augment.AugmentConfig, out_dir: Path, n=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for i, img in enumerate(cluster):
        storage.write_image(img, out_dir / f"cluster_{i:05d}.ppm")
        count += 1
    doc = {
        "format": "deepdim-cluster",
        "version": 1,
        "image_count": n if n is not None else count,
        "augmentation": asdict(cfg),
    }
    (out_dir / "cluster.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_layers(args) -> list[activations.LayerActivations]:
    sources: list[Path] = []
    if args.manifest:
        manifest = storage.read_manifest(args.manifest)
        sources += storage.manifest_activation_paths(manifest, args.manifest)
    sources += [Path(p) for p in args.paths]
    if not sources:
        raise CliError("no activation sources given (pass ACTV files or --manifest)")
    layers = [storage.read_activations(p) for p in sources]
    if args.layers:
        wanted = [name.strip() for name in args.layers.split(",") if name.strip()]
        available = {acts.layer_name for acts in layers}
        unknown = [name for name in wanted if name not in available]
        if unknown:
            raise CliError(f"unknown layers requested: {unknown} (available: {sorted(available)})")
        layers = [acts for acts in layers if acts.layer_name in set(wanted)]
    return layers


def _pipeline_layer_names(net: forward.NetworkSpec, args) -> list[str]:
    default = [
        layer.name
        for layer in net.layers
        if not isinstance(layer, forward.SoftmaxLayer)
    ]
    if not args.layers:
        return default
    wanted = [name.strip() for name in args.layers.split(",") if name.strip()]
    known = set(net.layer_names())
    unknown = [name for name in wanted if name not in known]
    if unknown:
        raise CliError(f"unknown layers requested: {unknown} (network has: {sorted(known)})")
    return wanted


def _select_maps(acts: activations.LayerActivations, args) -> list[int] | None:
    if args.maps is None:
        return None
    if args.maps < 1:
        raise CliError(f"--maps must be >= 1, got {args.maps}")
    k = min(args.maps, acts.channels)
    # a per-layer substream keyed by the layer name keeps the selection
    # independent of which other layers are analyzed alongside it
    seq = np.random.SeedSequence(
        entropy=int(args.map_seed), spawn_key=(zlib.crc32(acts.layer_name.encode()),)
    )
    rng = np.random.default_rng(seq)
    return [int(i) for i in rng.choice(acts.channels, size=k, replace=False)]


def _analyze_layers(layers, args) -> storage.DimensionReport:
    summaries = []
    log_spectra: dict[str, dict[str, list[float]]] = {}
    workers = worker_count()
    for acts in layers:
        indices = _select_maps(acts, args)
        analysis = activations.analyze_layer(
            acts,
            indices,
            args.theta,
            include_concatenated=args.concat,
            include_original=args.original,
            center=args.center,
            workers=workers,
            keep_spectra=args.log_spectrum,
        )
        summaries.append(analysis.summary)
        if args.log_spectrum:
            log_spectra[acts.layer_name] = {
                label: [float(v) for v in log_spectrum(spec)]
                for label, spec in analysis.spectra.items()
            }
    return storage.DimensionReport(summaries=tuple(summaries), log_spectra=log_spectra)


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
