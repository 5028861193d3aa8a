"""Locate the dominant spectral drop and turn it into a dimension estimate.

A cluster concentrated near a low-dimensional hyperplane shows a cliff in
its singular spectrum: consecutive values fall by orders of magnitude at
the boundary between signal and noise.  ``detect_drop`` finds the first
index where that cliff exceeds a ratio threshold and reports it as the
local dimension; a spectrum with no cliff fills the whole space it is
allowed to span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_spectrum

__all__ = [
    "DEFAULT_THETA",
    "LOG_ZERO_SENTINEL",
    "DropReport",
    "detect_drop",
    "log_spectrum",
]

# Ratio two consecutive singular values must exceed to count as a drop.
DEFAULT_THETA = 1e5

# Stand-in log10 for exact zeros, below anything a positive normal
# float64 singular value can produce.
LOG_ZERO_SENTINEL = -320.0


@dataclass(frozen=True)
class DropReport:
    """Outcome of drop detection on one singular spectrum.

    ``dimension`` is the estimated local dimension.  ``drop_index`` (1-based)
    and ``drop_ratio`` describe the detected cliff; both are ``None`` when no
    ratio qualifies, in which case ``full_space`` is true and the dimension
    equals the spectrum length.  The all-zero spectrum is the one degenerate
    case: it reports dimension 0 with ``full_space`` false and no drop,
    because a zero matrix spans a 0-dimensional space.
    """

    dimension: int
    drop_index: int | None
    drop_ratio: float | None
    theta: float
    full_space: bool
    log_values: tuple[float, ...]


def detect_drop(spectrum, theta: float = DEFAULT_THETA) -> DropReport:
    """Estimate the dimension as the first j with sigma_j / sigma_{j+1} > theta.

    A ratio with a zero denominator under a positive numerator counts as
    infinite and always qualifies, so trailing exact zeros (rank-deficient
    input) put the drop at the numerical rank.  When several ratios
    qualify, the smallest j wins: the first cliff bounds the signal
    subspace.  Without any qualifying j the report is full-space with
    dimension equal to the spectrum length.
    """
    s = as_spectrum(spectrum)
    if not theta > 1.0:
        raise ValueError(f"theta must exceed 1, got {theta}")
    logs = tuple(float(v) for v in log_spectrum(s))
    if s[0] == 0.0:
        return DropReport(0, None, None, float(theta), False, logs)
    upper, lower = s[:-1], s[1:]
    positive = lower > 0.0
    ratios = np.where(positive, upper / np.where(positive, lower, 1.0), math.inf)
    hits = np.nonzero(ratios > theta)[0]
    if hits.size:
        j = int(hits[0]) + 1
        return DropReport(j, j, float(ratios[j - 1]), float(theta), False, logs)
    return DropReport(int(s.size), None, None, float(theta), True, logs)


def log_spectrum(spectrum) -> np.ndarray:
    """Elementwise log10 of a spectrum; exact zeros map to LOG_ZERO_SENTINEL."""
    s = as_spectrum(spectrum)
    out = np.full(s.shape, LOG_ZERO_SENTINEL)
    positive = s > 0.0
    out[positive] = np.log10(s[positive])
    return out
