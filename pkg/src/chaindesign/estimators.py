"""Point-estimate losses and partial correlations."""

import numpy as np

from .linalg import NotPositiveDefiniteError, is_pd

__all__ = ["steins_loss", "partial_correlation", "partial_correlations"]


def steins_loss(estimate, truth):
    """Stein's loss ``tr(E T^{-1}) - log det(E T^{-1}) - k`` for precision matrices."""
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have the same shape")
    if not (is_pd(estimate) and is_pd(truth)):
        raise NotPositiveDefiniteError("Stein's loss needs positive definite arguments")
    m = np.linalg.solve(truth, estimate)
    _, ld = np.linalg.slogdet(m)
    return max(float(np.trace(m) - ld - truth.shape[0]), 0.0)


def partial_correlation(omega, i, j):
    """``-omega_ij / sqrt(omega_ii omega_jj)``; ``omega`` may be a stack of matrices."""
    if i == j:
        raise ValueError("partial correlation needs two distinct indices")
    omega = np.asarray(omega, dtype=float)
    k = omega.shape[-1]
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"indices ({i}, {j}) out of range for k = {k}")
    out = -omega[..., i, j] / np.sqrt(omega[..., i, i] * omega[..., j, j])
    return float(out) if out.ndim == 0 else out


def partial_correlations(omega):
    """Full partial-correlation matrix with unit diagonal."""
    omega = np.asarray(omega, dtype=float)
    d = np.sqrt(np.diagonal(omega, axis1=-2, axis2=-1))
    r = -omega / (d[..., :, None] * d[..., None, :])
    idx = np.arange(omega.shape[-1])
    r[..., idx, idx] = 1.0
    return r
