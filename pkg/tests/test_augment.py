"""Cluster generation: cropping, Gaussian noise, rotation, determinism."""

import numpy as np
import pytest

from deepdim.augment import (
    AugmentConfig,
    bilinear_resize,
    check_image,
    crop_augment,
    generate_cluster,
    noise_augment,
    rotate_augment,
    rotate_image,
)

from conftest import seed_image


def sub_rng(seed=0, index=1):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


class TestConfig:
    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            AugmentConfig(method="flip")

    def test_rejects_zero_strip(self):
        with pytest.raises(ValueError):
            AugmentConfig(method="crop", crop_max_strip=0)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            AugmentConfig(method="gaussian_noise", noise_var=-0.1)

    def test_rejects_negative_rotation(self):
        with pytest.raises(ValueError):
            AugmentConfig(method="rotation", rotation_max_deg=-1.0)

    def test_defaults(self):
        cfg = AugmentConfig(method="gaussian_noise")
        assert cfg.crop_max_strip == 10
        assert cfg.noise_mean == 0.0
        assert cfg.noise_var == 0.01
        assert cfg.rotation_max_deg == 10.0


class TestCheckImage:
    def test_rejects_out_of_range(self):
        img = np.full((4, 4, 3), 1.5)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            check_image(img)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError):
            check_image(np.zeros((4, 4, 1)))


class TestCrop:
    def test_constant_image_stays_constant(self):
        cfg = AugmentConfig(method="crop", crop_max_strip=4, seed=0)
        img = np.full((24, 24, 3), 0.37)
        out = crop_augment(img, cfg, sub_rng())
        assert out.shape == img.shape
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    def test_pass_through_resize_is_exact(self):
        img = seed_image(11, 17)
        np.testing.assert_array_equal(bilinear_resize(img, 11, 17), img)

    def test_strip_bound_enforced(self):
        cfg = AugmentConfig(method="crop", crop_max_strip=10, seed=0)
        with pytest.raises(ValueError, match="exhaust"):
            crop_augment(seed_image(16, 16), cfg, sub_rng())

    def test_seeded_determinism(self):
        cfg = AugmentConfig(method="crop", crop_max_strip=5, seed=3)
        img = seed_image(32, 32)
        a = crop_augment(img, cfg, sub_rng(3, 1))
        b = crop_augment(img, cfg, sub_rng(3, 1))
        np.testing.assert_array_equal(a, b)

    def test_output_in_range(self):
        cfg = AugmentConfig(method="crop", crop_max_strip=7, seed=1)
        img = seed_image(40, 30)
        for i in range(1, 8):
            out = crop_augment(img, cfg, sub_rng(1, i))
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestNoise:
    def test_zero_variance_is_identity(self):
        cfg = AugmentConfig(method="gaussian_noise", noise_var=0.0)
        img = seed_image(10, 10)
        np.testing.assert_array_equal(noise_augment(img, cfg, sub_rng()), img)

    def test_sample_variance_matches_config(self):
        # mid-gray keeps clamping negligible, so the empirical variance of
        # the added noise must land near the configured variance
        cfg = AugmentConfig(method="gaussian_noise", noise_var=0.01)
        img = np.full((200, 170, 3), 0.5)
        out = noise_augment(img, cfg, sub_rng(0, 1))
        var = np.var(out - img)
        assert abs(var - 0.01) < 0.0005

    def test_output_clamped_for_heavy_noise(self):
        cfg = AugmentConfig(method="gaussian_noise", noise_var=1.0)
        img = seed_image(12, 12)
        for i in range(1, 6):
            out = noise_augment(img, cfg, sub_rng(7, i))
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestRotation:
    def test_zero_max_angle_is_identity(self):
        cfg = AugmentConfig(method="rotation", rotation_max_deg=0.0)
        img = seed_image(14, 14)
        np.testing.assert_array_equal(rotate_augment(img, cfg, sub_rng()), img)

    def test_zero_angle_exact_identity(self):
        img = seed_image(9, 13)
        np.testing.assert_array_equal(rotate_image(img, 0.0), img)

    def test_constant_image_interior_constant_corners_black(self):
        img = np.full((20, 20, 3), 0.8)
        out = rotate_image(img, 45.0)
        assert out.max() <= 0.8 + 1e-12
        assert out[10, 10, 0] == pytest.approx(0.8, abs=1e-12)
        assert out[0, 0, 0] == 0.0  # corner leaves the frame at 45 degrees

    def test_output_in_range_and_shape(self):
        cfg = AugmentConfig(method="rotation", rotation_max_deg=10.0, seed=2)
        img = seed_image(18, 24)
        for i in range(1, 8):
            out = rotate_augment(img, cfg, sub_rng(2, i))
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestGenerateCluster:
    def test_first_element_is_original(self):
        img = seed_image()
        cluster = generate_cluster(img, 4, AugmentConfig(method="gaussian_noise", seed=1))
        np.testing.assert_array_equal(cluster[0], img)

    def test_n_one_is_just_the_original(self):
        img = seed_image()
        cluster = generate_cluster(img, 1, AugmentConfig(method="rotation", seed=1))
        assert len(cluster) == 1
        np.testing.assert_array_equal(cluster[0], img)

    def test_same_seed_identical_clusters(self):
        img = seed_image()
        cfg = AugmentConfig(method="gaussian_noise", seed=42)
        a = generate_cluster(img, 6, cfg)
        b = generate_cluster(img, 6, cfg)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_prefix_property(self):
        # sample i depends only on (seed, i): a shorter cluster is a prefix
        img = seed_image()
        cfg = AugmentConfig(method="rotation", seed=13)
        short = generate_cluster(img, 4, cfg)
        long = generate_cluster(img, 9, cfg)
        for x, y in zip(short, long):
            np.testing.assert_array_equal(x, y)

    def test_methods_produce_valid_images(self):
        img = seed_image(20, 20)
        for method in ("crop", "gaussian_noise", "rotation"):
            cfg = AugmentConfig(method=method, crop_max_strip=4, seed=11)
            for out in generate_cluster(img, 5, cfg):
                check_image(out)
                assert out.shape == img.shape

    def test_invalid_cluster_size(self):
        with pytest.raises(ValueError):
            generate_cluster(seed_image(), 0, AugmentConfig(method="crop"))

    def test_noise_variance_to_zero_approaches_identity(self):
        img = seed_image(12, 12)
        deviations = []
        for var in (1e-2, 1e-4, 1e-6, 1e-8):
            cfg = AugmentConfig(method="gaussian_noise", noise_var=var, seed=5)
            out = noise_augment(img, cfg, sub_rng(5, 1))
            deviations.append(np.abs(out - img).max())
        assert deviations == sorted(deviations, reverse=True)
        assert deviations[-1] < 1e-3
