"""Dense linear algebra over 64-bit reals: singular spectra and numerical rank.

Every question the analysis pipeline asks about a data cluster reduces to
the singular spectrum of a real D x n matrix.  The production routine
defers to LAPACK; ``gram_eigen_oracle`` is a small self-contained Jacobi
eigensolver kept as an independent verification path for the test suite.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ORACLE_MAX_SIZE",
    "as_matrix",
    "as_spectrum",
    "singular_values",
    "gram_eigen_oracle",
    "numerical_rank",
]

# The Jacobi oracle exists to cross-check the production path at test
# scale; refusing larger inputs keeps its cubic-per-sweep cost irrelevant.
ORACLE_MAX_SIZE = 64


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a float64 2-D array and enforce matrix invariants."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {m.ndim}-D data")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix needs at least one row and one column, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def as_spectrum(values) -> np.ndarray:
    """Coerce ``values`` to a float64 non-negative descending spectrum."""
    s = np.asarray(values, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"expected a 1-D spectrum, got {s.ndim}-D data")
    if s.size == 0:
        raise ValueError("spectrum is empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("spectrum values must be finite")
    if np.any(s < 0.0):
        raise ValueError("singular values cannot be negative")
    if np.any(np.diff(s) > 0.0):
        raise ValueError("spectrum must be sorted in descending order")
    return s


def singular_values(m) -> np.ndarray:
    """All ``min(rows, cols)`` singular values of ``m``, descending.

    Arithmetic is 64-bit regardless of the input dtype: the drop rule
    downstream compares ratios spanning five or more decades and needs
    headroom below the signal floor.  Deterministic for a fixed input.
    A ``MemoryError`` from the decomposition workspace propagates as-is.
    """
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def gram_eigen_oracle(m) -> np.ndarray:
    """Singular values via Jacobi eigenvalues of the smaller Gram matrix.

    Independent of :func:`singular_values` by construction: the smaller of
    ``M M^T`` / ``M^T M`` is diagonalized with cyclic Jacobi rotations
    until its off-diagonal norm falls below ``1e-14 * trace``, and the
    square roots of the eigenvalues are returned in descending order.
    Negative rounding residues are clamped to zero.  Test-scale only:
    refuses ``min(rows, cols) > ORACLE_MAX_SIZE``.
    """
    m = as_matrix(m)
    if min(m.shape) > ORACLE_MAX_SIZE:
        raise ValueError(
            f"oracle supports min(rows, cols) <= {ORACLE_MAX_SIZE}, got shape {m.shape}"
        )
    gram = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    eigenvalues = _jacobi_eigenvalues(gram)
    return np.sqrt(np.maximum(np.sort(eigenvalues)[::-1], 0.0))


def numerical_rank(spectrum, rel_tol: float) -> int:
    """Number of singular values strictly above ``rel_tol`` times the largest."""
    s = as_spectrum(spectrum)
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def _jacobi_eigenvalues(sym: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric PSD matrix by cyclic Jacobi rotations.

    Pairs are visited in round-robin order, so each round's rotations act
    on disjoint row/column pairs.  Disjoint rotations neither overlap nor
    disturb each other's pivot entries, which lets a whole round be applied
    as one blocked update while remaining exactly the sequential cyclic
    sweep in that ordering.
    """
    a = np.array(sym, dtype=np.float64)
    k = a.shape[0]
    if k == 1:
        return a.diagonal().copy()
    target = 1e-14 * float(np.trace(a))
    if target <= 0.0:
        # a PSD matrix with zero trace is the zero matrix
        return np.zeros(k)
    # entries below this bound cannot push the off-diagonal norm past target
    skip = target / (k * k)
    rounds = _round_robin_pairs(k)
    for _ in range(max_sweeps):
        if _off_norm(a) < target:
            return a.diagonal().copy()
        for p_all, q_all in rounds:
            pivots = a[p_all, q_all]
            live = np.abs(pivots) > skip
            if not live.any():
                continue
            p, q, apq = p_all[live], q_all[live], pivots[live]
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            sign = np.where(tau >= 0.0, 1.0, -1.0)
            t = sign / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = c[None, :] * cp - s[None, :] * cq
            a[:, q] = s[None, :] * cp + c[None, :] * cq
            a[p, q] = a[q, p] = 0.0
    raise RuntimeError("Jacobi sweep limit reached before convergence")


def _round_robin_pairs(k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: k-1 (or k) rounds of pairwise-disjoint index pairs."""
    players = list(range(k)) + ([-1] if k % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            x, y = players[i], players[m - 1 - i]
            if x >= 0 and y >= 0:
                ps.append(min(x, y))
                qs.append(max(x, y))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a: np.ndarray) -> float:
    # summing the off-diagonal entries directly avoids the catastrophic
    # cancellation of the trace-subtraction form
    off = a - np.diag(a.diagonal())
    return math.sqrt(float(np.sum(off * off)))
