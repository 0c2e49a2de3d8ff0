"""Laplace approximation of the marginal posterior precision of ``Omega``."""

from dataclasses import dataclass

import numpy as np

from .linalg import (
    NotPositiveDefiniteError,
    duplication,
    inv_spd,
    is_pd,
    log_det,
    schur_marginal,
    sym,
)
from .model import ChainGraphParams, fisher_information
from .priors import (
    FlatPrior,
    GeneralIndependentPrior,
    NormalMGIGPrior,
    NormalWishartPrior,
    _nmgig_psi_gain,
    prior_hessian,
    warn_if_not_log_concave,
)

__all__ = [
    "MarginalPrecision",
    "marginal_precision",
    "marginal_precision_generic",
    "info_gain",
    "info_bound",
    "d_optimality_score",
]


@dataclass(frozen=True)
class MarginalPrecision:
    matrix: np.ndarray
    depends_on_design: bool


def _design(X, p):
    return np.asarray(X, dtype=float).reshape(-1, p)


def _wrap(sigma, inner):
    """``D^T (sigma x inner) D``."""
    dk = duplication(sigma.shape[0])
    return sym(dk.T @ np.kron(sigma, inner) @ dk)


def _sigma(omega):
    if not is_pd(omega):
        raise NotPositiveDefiniteError("Omega must be positive definite")
    return inv_spd(omega)


def _general_terms(prior, params, X):
    """``E`` and the transformed ``Lambda^{-1}`` gain for the general prior."""
    sigma = _sigma(params.omega)
    k = params.k
    X = _design(X, params.p)
    e = np.kron(np.eye(k), sigma @ params.B.T)
    L = prior.lambda_inv_hessian
    fg = np.kron(sigma, X.T @ X)
    gain = L - L @ np.linalg.solve(fg + L, L)
    return sigma, e, L, sym(gain)


def marginal_precision(prior, params, X, n, check=True):
    """Closed-form Laplace marginal precision of ``vech Omega``.

    Evaluated at the supplied ``(Omega, B)``. Flat and Normal-Wishart results
    do not depend on ``X``.
    """
    sigma = _sigma(params.omega)
    k = params.k
    dk = duplication(k)
    base = sym(dk.T @ np.kron(sigma, sigma) @ dk)
    if check:
        warn_if_not_log_concave(prior, k, params.p)
    if isinstance(prior, FlatPrior):
        return MarginalPrecision(0.5 * n * base, False)
    if isinstance(prior, NormalWishartPrior):
        return MarginalPrecision((0.5 * n + prior.alpha) * base, False)
    if isinstance(prior, NormalMGIGPrior):
        mat = (
            (0.5 * n + prior.alpha) * base
            + info_gain(prior, params.omega, X)
            + _wrap(sigma, sigma @ prior.Psi @ sigma)
        )
        return MarginalPrecision(mat, True)
    if isinstance(prior, GeneralIndependentPrior):
        sigma, e, _, gain = _general_terms(prior, params, X)
        mat = 0.5 * n * base + dk.T @ e @ gain @ e.T @ dk + prior.psi_hessian
        return MarginalPrecision(sym(mat), True)
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def marginal_precision_generic(prior, params, X, n):
    """Schur complement of the assembled joint negative Hessian.

    Serves as an independent check of :func:`marginal_precision`.
    """
    X = _design(X, params.p)
    h = fisher_information(params, X, n) - prior_hessian(prior, params)
    m = params.k * (params.k + 1) // 2
    depends = isinstance(prior, (NormalMGIGPrior, GeneralIndependentPrior))
    return MarginalPrecision(sym(schur_marginal(h, m)), depends)


def info_gain(prior, omega, X, B=None, inner=False):
    """Design-dependent information term of the marginal precision.

    For a Normal-MGIG prior the inner ``k x k`` form is
    ``Omega^{-1} B0^T (Lambda^{-1} - Lambda^{-1} (X^T X + Lambda^{-1})^{-1} Lambda^{-1}) B0 Omega^{-1}``.
    For a general independent prior pass ``B``; only the wrapped form exists.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    sigma = _sigma(omega)
    if isinstance(prior, GeneralIndependentPrior):
        params = ChainGraphParams(B, omega)
        _, e, _, gain = _general_terms(prior, params, X)
        dk = duplication(omega.shape[0])
        return sym(dk.T @ e @ gain @ e.T @ dk)
    X = _design(X, prior.p)
    lam_inv = inv_spd(prior.Lambda)
    F = sym(X.T @ X + lam_inv)
    G = _nmgig_psi_gain(X.T @ X, lam_inv, F)
    mid = sym(sigma @ prior.B0.T @ G @ prior.B0 @ sigma)
    return mid if inner else _wrap(sigma, mid)


def info_bound(prior, params, inner=False):
    """Upper bound of :func:`info_gain` over all designs, reached as ``X^T X`` grows."""
    sigma = _sigma(params.omega)
    if isinstance(prior, GeneralIndependentPrior):
        k = params.k
        e = np.kron(np.eye(k), sigma @ params.B.T)
        dk = duplication(k)
        return sym(dk.T @ e @ prior.lambda_inv_hessian @ e.T @ dk)
    mid = sym(sigma @ prior.B0.T @ inv_spd(prior.Lambda) @ prior.B0 @ sigma)
    return mid if inner else _wrap(sigma, mid)


def d_optimality_score(X, Lambda):
    """``log |X^T X + Lambda^{-1}|``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    X = _design(X, Lambda.shape[0])
    return log_det(X.T @ X + inv_spd(Lambda))
