"""Drop detection and log-scale spectra."""

import math

import numpy as np
import pytest

from deepdim.linalg import singular_values
from deepdim.spectrum import LOG_ZERO_SENTINEL, detect_drop, log_spectrum


class TestDetectDrop:
    def test_single_constructed_drop(self):
        rep = detect_drop([1e2, 10.0, 1.0, 1e-7, 1e-8], theta=1e5)
        assert rep.dimension == 3
        assert rep.drop_index == 3
        assert rep.drop_ratio == pytest.approx(1e7, rel=1e-12)
        assert not rep.full_space

    def test_no_drop_is_full_space(self):
        rep = detect_drop([3.0, 2.0, 1.0], theta=1e5)
        assert rep.full_space
        assert rep.dimension == 3
        assert rep.drop_index is None and rep.drop_ratio is None

    def test_smooth_thousand_value_spectrum_spans_everything(self):
        # the classifier-head regime: a gapless spectrum over the whole space
        s = np.logspace(3.0, -2.0, 1000)
        rep = detect_drop(s, theta=1e5)
        assert rep.full_space
        assert rep.dimension == 1000

    def test_zero_after_positive_always_drops(self):
        rep = detect_drop([5.0, 2.0, 0.0], theta=1e5)
        assert rep.dimension == 2
        assert rep.drop_ratio == math.inf

    def test_trailing_zero_run_drops_at_numerical_rank(self):
        rep = detect_drop([4.0, 3.0, 0.0, 0.0, 0.0], theta=10.0)
        assert rep.dimension == 2

    def test_all_zero_spectrum_is_degenerate(self):
        rep = detect_drop([0.0, 0.0], theta=1e5)
        assert rep.dimension == 0
        assert not rep.full_space
        assert rep.drop_index is None and rep.drop_ratio is None

    def test_single_value_spectrum(self):
        rep = detect_drop([2.5], theta=1e5)
        assert rep.full_space and rep.dimension == 1

    def test_first_drop_wins(self):
        rep = detect_drop([1.0, 1e-8, 1e-16], theta=1e5)
        assert rep.dimension == 1

    def test_validation(self):
        with pytest.raises(ValueError, match="theta"):
            detect_drop([2.0, 1.0], theta=1.0)
        with pytest.raises(ValueError):
            detect_drop([], theta=1e5)
        with pytest.raises(ValueError, match="descending"):
            detect_drop([1.0, 2.0], theta=1e5)
        with pytest.raises(ValueError, match="negative"):
            detect_drop([1.0, -0.5], theta=1e5)


class TestDropProperties:
    def seeded_spectra(self, count=15):
        rng = np.random.default_rng(77)
        out = []
        for _ in range(count):
            size = int(rng.integers(2, 40))
            s = np.sort(10.0 ** rng.uniform(-12, 3, size))[::-1]
            out.append(s)
        return out

    def test_theta_monotonicity(self):
        thetas = [10.0, 1e3, 1e5, 1e9]
        for s in self.seeded_spectra():
            dims = [detect_drop(s, t).dimension for t in thetas]
            assert dims == sorted(dims)

    def test_scale_invariance(self):
        for s in self.seeded_spectra():
            base = detect_drop(s, 1e4)
            for c in (1e-6, 3.0, 1e8):
                scaled = detect_drop(c * s, 1e4)
                assert scaled.dimension == base.dimension
                assert scaled.drop_index == base.drop_index

    def test_first_drop_rule_by_scanning(self):
        theta = 1e4
        for s in self.seeded_spectra():
            rep = detect_drop(s, theta)
            if rep.drop_index is None:
                continue
            for j in range(1, rep.drop_index):
                assert s[j - 1] / s[j] <= theta

    def test_appended_zero_always_detected(self):
        for s in self.seeded_spectra():
            rep = detect_drop(np.append(s, 0.0), 1e6)
            assert rep.drop_index is not None


class TestLogSpectrum:
    def test_powers_of_ten(self):
        np.testing.assert_allclose(log_spectrum([100.0, 10.0, 1.0]), [2.0, 1.0, 0.0])

    def test_zero_sentinel(self):
        np.testing.assert_allclose(log_spectrum([1.0, 0.0]), [0.0, LOG_ZERO_SENTINEL])

    def test_identity_spectrum_logs_to_zero(self):
        s = singular_values(np.eye(3))
        np.testing.assert_allclose(log_spectrum(s), [0.0, 0.0, 0.0], atol=1e-14)

    def test_reported_in_drop_report(self):
        rep = detect_drop([100.0, 1.0, 0.0], theta=10.0)
        np.testing.assert_allclose(rep.log_values, [2.0, 0.0, LOG_ZERO_SENTINEL])
