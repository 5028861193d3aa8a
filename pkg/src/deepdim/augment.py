"""Build a cluster of perturbed images from one seed image.

Three perturbations are supported: cropping a random strip off every edge
(then rescaling back), per-pixel Gaussian noise, and rotation by a random
small angle.  Every sample draws from its own random substream derived
from (seed, sample index), so clusters are reproducible bit-for-bit and a
prefix of a larger cluster equals the smaller cluster with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "METHODS",
    "AugmentConfig",
    "check_image",
    "crop_augment",
    "noise_augment",
    "rotate_augment",
    "generate_cluster",
    "iter_cluster",
]

METHODS = ("crop", "gaussian_noise", "rotation")


@dataclass(frozen=True)
class AugmentConfig:
    """Method selection and parameters for cluster generation.

    ``crop_max_strip`` bounds the per-edge strip width in pixels,
    ``noise_var`` is the per-pixel Gaussian variance on the [0, 1] pixel
    scale, and ``rotation_max_deg`` bounds the rotation angle in degrees.
    """

    method: str
    crop_max_strip: int = 10
    noise_mean: float = 0.0
    noise_var: float = 0.01
    rotation_max_deg: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.crop_max_strip < 1:
            raise ValueError("crop_max_strip must be >= 1")
        if self.noise_var < 0.0:
            raise ValueError("noise_var must be >= 0")
        if self.rotation_max_deg < 0.0:
            raise ValueError("rotation_max_deg must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def check_image(img) -> np.ndarray:
    """Validate an (H, W, 3) float image with finite pixels in [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("image must have at least one row and column")
    if not np.all(np.isfinite(a)):
        raise ValueError("image pixels must be finite")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("image pixels must lie in [0, 1]")
    return a


def crop_augment(img, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Cut a random 1..crop_max_strip pixel strip off every edge, rescale back.

    Strip widths are drawn in the fixed order top, bottom, left, right.
    The cropped interior is resized to the original H x W with bilinear
    interpolation.
    """
    a = check_image(img)
    h, w = a.shape[:2]
    if not cfg.crop_max_strip < min(h, w) / 2:
        raise ValueError(
            f"crop_max_strip={cfg.crop_max_strip} would exhaust a {h}x{w} image "
            "(must stay below half the smaller side)"
        )
    top, bottom, left, right = rng.integers(1, cfg.crop_max_strip + 1, size=4)
    cropped = a[top : h - bottom, left : w - right]
    return bilinear_resize(cropped, h, w)


def noise_augment(img, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian(mean, var) noise per pixel per channel, clamp to [0, 1]."""
    a = check_image(img)
    noisy = a + rng.normal(cfg.noise_mean, math.sqrt(cfg.noise_var), a.shape)
    return np.clip(noisy, 0.0, 1.0)


def rotate_augment(img, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Rotate about the image center by a uniform random angle, bilinear resampling.

    The angle is uniform in [-rotation_max_deg, +rotation_max_deg]; pixels
    sampled from outside the frame are filled with black.
    """
    a = check_image(img)
    angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
    return rotate_image(a, angle)


def generate_cluster(img, n: int, cfg: AugmentConfig) -> list[np.ndarray]:
    """The full cluster: the original image followed by n - 1 augmentations."""
    return list(iter_cluster(img, n, cfg))


def iter_cluster(img, n: int, cfg: AugmentConfig):
    """Yield cluster members one by one; element 0 is the original image.

    Sample i draws from a substream derived from (cfg.seed, i), so the
    sequence is fully determined by (image, n, config) and members can be
    generated independently or in parallel with identical results.
    """
    a = check_image(img)
    if n < 1:
        raise ValueError(f"cluster size must be >= 1, got {n}")
    augment = _METHOD_FN[cfg.method]
    yield a.copy()
    for i in range(1, n):
        yield augment(a, cfg, _sample_rng(cfg.seed, i))


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize with bilinear interpolation on the aligned-corners grid.

    Resizing to the input size is an exact pass-through.
    """
    in_h, in_w = img.shape[:2]
    rows = np.linspace(0.0, in_h - 1.0, out_h)
    cols = np.linspace(0.0, in_w - 1.0, out_w)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _bilinear_sample(img, rr, cc, fill=None)


def rotate_image(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the center by ``angle_deg``; out-of-frame pixels become black."""
    h, w = img.shape[:2]
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr_out, cc_out = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    dy = rr_out - cy
    dx = cc_out - cx
    # inverse map: where each output pixel comes from in the source frame
    src_r = cy + c * dy - s * dx
    src_c = cx + s * dy + c * dx
    return _bilinear_sample(img, src_r, src_c, fill=0.0)


def _bilinear_sample(img: np.ndarray, rr: np.ndarray, cc: np.ndarray, fill):
    """Sample ``img`` at fractional coordinates (rr, cc) with bilinear weights.

    ``fill`` of None requires all coordinates in range; a float fills
    out-of-range samples with that value.
    """
    in_h, in_w = img.shape[:2]
    if fill is not None:
        inside = (rr >= 0.0) & (rr <= in_h - 1.0) & (cc >= 0.0) & (cc <= in_w - 1.0)
        rr = np.clip(rr, 0.0, in_h - 1.0)
        cc = np.clip(cc, 0.0, in_w - 1.0)
    r0 = np.floor(rr).astype(np.intp)
    c0 = np.floor(cc).astype(np.intp)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    wr = (rr - r0)[..., None]
    wc = (cc - c0)[..., None]
    out = (
        img[r0, c0] * (1.0 - wr) * (1.0 - wc)
        + img[r0, c1] * (1.0 - wr) * wc
        + img[r1, c0] * wr * (1.0 - wc)
        + img[r1, c1] * wr * wc
    )
    if fill is not None:
        out[~inside] = fill
    return np.clip(out, 0.0, 1.0)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.default_rng(seq)


_METHOD_FN = {
    "crop": crop_augment,
    "gaussian_noise": noise_augment,
    "rotation": rotate_augment,
}
