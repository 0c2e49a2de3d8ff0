"""Prior families on ``(Omega, B)``: densities, Hessians and conjugate updates."""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import multigammaln

from .linalg import (
    NotPositiveDefiniteError,
    duplication,
    inv_spd,
    is_pd,
    log_det,
    solve_spd,
    sym,
    vech_size,
)

__all__ = [
    "FlatPrior",
    "NormalWishartPrior",
    "NormalMGIGPrior",
    "GeneralIndependentPrior",
    "MGIGParams",
    "WishartParams",
    "ConditionalNormal",
    "NWPosterior",
    "NMGIGPosterior",
    "ConcavityCheck",
    "LogConcavityWarning",
    "nw_posterior",
    "nmgig_posterior",
    "log_prior_density",
    "prior_hessian",
    "log_concavity_check",
    "preset",
    "PRESETS",
]


def _mat(a):
    return np.atleast_2d(np.asarray(a, dtype=float))


def _check_pd(name, a):
    if not is_pd(a):
        raise NotPositiveDefiniteError(f"{name} must be positive definite")


@dataclass(frozen=True)
class FlatPrior:
    name = "flat"


@dataclass(frozen=True)
class NormalWishartPrior:
    """``Omega ~ W(lam, Phi^{-1})`` and ``vec B | Omega ~ N(vec(B0 Omega), Omega x Lambda)``."""

    lam: float
    Phi: np.ndarray
    B0: np.ndarray
    Lambda: np.ndarray
    name = "wishart"

    def __post_init__(self):
        Phi, Lambda = _mat(self.Phi), _mat(self.Lambda)
        k, p = Phi.shape[0], Lambda.shape[0]
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Lambda", Lambda)
        object.__setattr__(self, "B0", np.asarray(self.B0, dtype=float).reshape(p, k))
        _check_pd("Phi", Phi)
        _check_pd("Lambda", Lambda)
        if not self.lam > k - 1:
            raise ValueError(f"Wishart degrees of freedom must exceed k - 1 = {k - 1}")

    @property
    def k(self):
        return self.Phi.shape[0]

    @property
    def p(self):
        return self.Lambda.shape[0]

    @property
    def alpha(self):
        return 0.5 * (self.lam - self.k - self.p - 1)


@dataclass(frozen=True)
class NormalMGIGPrior:
    """``Omega ~ MGIG(lam, Psi, Phi)`` and ``vec B | Omega ~ N(vec B0, Omega x Lambda)``."""

    lam: float
    Psi: np.ndarray
    Phi: np.ndarray
    B0: np.ndarray
    Lambda: np.ndarray
    name = "mgig"

    def __post_init__(self):
        Psi, Phi, Lambda = _mat(self.Psi), _mat(self.Phi), _mat(self.Lambda)
        k, p = Phi.shape[0], Lambda.shape[0]
        for name, a in (("Psi", Psi), ("Phi", Phi), ("Lambda", Lambda)):
            object.__setattr__(self, name, a)
            _check_pd(name, a)
        object.__setattr__(self, "B0", np.asarray(self.B0, dtype=float).reshape(p, k))

    @property
    def k(self):
        return self.Phi.shape[0]

    @property
    def p(self):
        return self.Lambda.shape[0]

    @property
    def alpha(self):
        return self.lam - 0.5 * (self.k + self.p + 1)

    @property
    def mgig(self):
        return MGIGParams(self.lam, self.Psi, self.Phi)


@dataclass(frozen=True)
class GeneralIndependentPrior:
    """Independent log-concave prior given by its two negative Hessian blocks.

    ``psi_hessian`` is the negative Hessian of ``g(Omega)`` in vech
    coordinates and ``lambda_inv_hessian`` that of ``f(B)`` in vec coordinates.
    """

    psi_hessian: np.ndarray
    lambda_inv_hessian: np.ndarray
    name = "general"

    def __post_init__(self):
        object.__setattr__(self, "psi_hessian", sym(_mat(self.psi_hessian)))
        object.__setattr__(self, "lambda_inv_hessian", sym(_mat(self.lambda_inv_hessian)))


PriorSpec = Union[FlatPrior, NormalWishartPrior, NormalMGIGPrior, GeneralIndependentPrior]


@dataclass(frozen=True)
class MGIGParams:
    """Density proportional to ``|W|^{lam-(k+1)/2} exp(-tr(Psi W^{-1})/2 - tr(Phi W)/2)``."""

    lam: float
    Psi: np.ndarray
    Phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Psi", sym(_mat(self.Psi)))
        object.__setattr__(self, "Phi", sym(_mat(self.Phi)))

    @property
    def k(self):
        return self.Phi.shape[0]

    @property
    def beta(self):
        return self.lam - 0.5 * (self.k + 1)

    def log_density(self, omega):
        """Unnormalized log density; accepts a stack of matrices."""
        omega = np.asarray(omega, dtype=float)
        sign, ld = np.linalg.slogdet(omega)
        inv = np.linalg.inv(omega)
        val = (
            self.beta * ld
            - 0.5 * np.einsum("ij,...ji->...", self.Psi, inv)
            - 0.5 * np.einsum("ij,...ji->...", self.Phi, omega)
        )
        return np.where(sign > 0, val, -np.inf)


@dataclass(frozen=True)
class WishartParams:
    """Wishart with ``df`` degrees of freedom and scale matrix ``scale``."""

    df: float
    scale: np.ndarray

    @property
    def k(self):
        return self.scale.shape[0]

    @property
    def mean(self):
        return self.df * self.scale

    @property
    def mode(self):
        return (self.df - self.k - 1) * self.scale

    def log_normalizer(self):
        k = self.k
        return (
            0.5 * self.df * k * np.log(2.0)
            + 0.5 * self.df * log_det(self.scale)
            + multigammaln(0.5 * self.df, k)
        )

    def log_density(self, omega):
        omega = np.asarray(omega, dtype=float)
        _, ld = np.linalg.slogdet(omega)
        prec = inv_spd(self.scale)
        return (
            0.5 * (self.df - self.k - 1) * ld
            - 0.5 * np.einsum("ij,...ji->...", prec, omega)
            - self.log_normalizer()
        )


@dataclass(frozen=True)
class ConditionalNormal:
    """``B | Omega ~ MN(left @ Omega + offset, row_cov, Omega)``.

    Row covariance ``row_cov`` (p x p) and column covariance ``Omega``, so
    ``cov(vec B) = Omega x row_cov``.
    """

    left: np.ndarray
    offset: np.ndarray
    row_cov: np.ndarray

    def mean(self, omega):
        return self.left @ omega + self.offset

    def sample(self, omega, rng):
        """One draw of ``B`` for each matrix in the stack ``omega``."""
        omega = np.asarray(omega, dtype=float)
        p = self.row_cov.shape[0]
        lr = np.linalg.cholesky(self.row_cov)
        lc = np.linalg.cholesky(omega)
        z = rng.standard_normal(omega.shape[:-2] + (p, omega.shape[-1]))
        return self.mean(omega) + lr @ z @ np.swapaxes(lc, -1, -2)

    def log_density(self, B, omega):
        """Log density of ``B`` given ``Omega`` (normalized)."""
        p, k = self.row_cov.shape[0], np.shape(omega)[-1]
        r = B - self.mean(omega)
        _, ld_om = np.linalg.slogdet(omega)
        quad = np.einsum("...ij,...ij->...", np.linalg.solve(self.row_cov, r), _right_solve(r, omega))
        return (
            -0.5 * p * k * np.log(2 * np.pi)
            - 0.5 * k * log_det(self.row_cov)
            - 0.5 * p * ld_om
            - 0.5 * quad
        )


def _right_solve(r, omega):
    """``r @ inv(omega)``, stack aware."""
    return np.swapaxes(np.linalg.solve(omega, np.swapaxes(r, -1, -2)), -1, -2)


@dataclass(frozen=True)
class NWPosterior:
    marginal: WishartParams
    conditional: ConditionalNormal


@dataclass(frozen=True)
class NMGIGPosterior:
    marginal: MGIGParams
    conditional: ConditionalNormal


def _stats(prior, data):
    xtx, xty, yty = data.gram()
    lam_inv = inv_spd(prior.Lambda)
    F = sym(xtx + lam_inv)
    return xtx, xty, yty, lam_inv, F


def nw_posterior(prior, data):
    """Conjugate Normal-Wishart update; the marginal is ``W(lam + n, Phi_hat^{-1})``."""
    xtx, xty, yty, lam_inv, F = _stats(prior, data)
    B0 = prior.B0
    rhs = lam_inv @ B0 + xty
    left = solve_spd(F, rhs)
    phi_hat = sym(prior.Phi + yty + B0.T @ lam_inv @ B0 - rhs.T @ left)
    if not is_pd(phi_hat):
        raise NotPositiveDefiniteError("posterior Phi_hat is not positive definite")
    F_inv = inv_spd(F)
    return NWPosterior(
        marginal=WishartParams(prior.lam + data.n, inv_spd(phi_hat)),
        conditional=ConditionalNormal(left, np.zeros_like(left), F_inv),
    )


def _nmgig_psi_gain(xtx, lam_inv, F):
    """``Lambda^{-1} - Lambda^{-1} F^{-1} Lambda^{-1}`` written as ``Lambda^{-1} F^{-1} X^T X``.

    The second form avoids cancellation when ``Lambda`` is tiny.
    """
    return sym(lam_inv @ solve_spd(F, xtx))


def nmgig_posterior(prior, data):
    """Conjugate update of the Normal-MGIG prior.

    The marginal of ``Omega`` is ``MGIG(lam + n/2, Psi_hat, Phi_hat)``.
    """
    xtx, xty, yty, lam_inv, F = _stats(prior, data)
    B0 = prior.B0
    G = _nmgig_psi_gain(xtx, lam_inv, F)
    psi_hat = sym(prior.Psi + B0.T @ G @ B0)
    phi_hat = sym(prior.Phi + yty - xty.T @ solve_spd(F, xty))
    for name, a in (("Psi_hat", psi_hat), ("Phi_hat", phi_hat)):
        if not is_pd(a):
            raise NotPositiveDefiniteError(f"posterior {name} is not positive definite")
    F_inv = inv_spd(F)
    return NMGIGPosterior(
        marginal=MGIGParams(prior.lam + 0.5 * data.n, psi_hat, phi_hat),
        conditional=ConditionalNormal(F_inv @ xty, F_inv @ lam_inv @ B0, F_inv),
    )


def prior_conditional(prior):
    """Prior law of ``B`` given ``Omega`` as a :class:`ConditionalNormal`."""
    zeros = np.zeros_like(prior.B0)
    if isinstance(prior, NormalWishartPrior):
        return ConditionalNormal(prior.B0, zeros, prior.Lambda)
    return ConditionalNormal(zeros, prior.B0, prior.Lambda)


def log_prior_density(prior, params):
    """Unnormalized log prior; ``-inf`` when ``Omega`` is not PD."""
    if isinstance(prior, FlatPrior):
        return 0.0
    if isinstance(prior, GeneralIndependentPrior):
        raise TypeError("general independent priors are specified by Hessians only")
    omega, B = params.omega, params.B
    if not is_pd(omega):
        return -np.inf
    lam_inv = inv_spd(prior.Lambda)
    sigma = inv_spd(omega)
    k, p = prior.k, prior.p
    ld = log_det(omega)
    if isinstance(prior, NormalWishartPrior):
        r = B - prior.B0 @ omega
        return float(
            0.5 * (prior.lam - k - 1) * ld
            - 0.5 * np.sum(prior.Phi * omega)
            - 0.5 * p * ld
            - 0.5 * np.sum((lam_inv @ r) * (r @ sigma))
        )
    r = B - prior.B0
    return float(
        float(prior.mgig.log_density(omega))
        - 0.5 * p * ld
        - 0.5 * np.sum((lam_inv @ r) * (r @ sigma))
    )


def _assemble(a, g, d):
    return np.block([[a, g], [g.T, d]])


def prior_hessian(prior, params):
    """Analytic Hessian of :func:`log_prior_density` in ``(vech Omega, vec B)``."""
    omega, B = params.omega, params.B
    k, p = params.k, params.p
    m = vech_size(k)
    if isinstance(prior, FlatPrior):
        return np.zeros((m + k * p, m + k * p))
    if isinstance(prior, GeneralIndependentPrior):
        return -_assemble(prior.psi_hessian, np.zeros((m, k * p)), prior.lambda_inv_hessian)
    dk = duplication(k)
    sigma = inv_spd(omega)
    lam_inv = inv_spd(prior.Lambda)
    if isinstance(prior, NormalWishartPrior):
        inner = prior.alpha * sigma + sigma @ B.T @ lam_inv @ B @ sigma
        cross = dk.T @ np.kron(sigma, sigma @ B.T @ lam_inv)
    else:
        r = B - prior.B0
        inner = prior.alpha * sigma + sigma @ (r.T @ lam_inv @ r + prior.Psi) @ sigma
        cross = dk.T @ np.kron(sigma, sigma @ r.T @ lam_inv)
    a = -sym(dk.T @ np.kron(sigma, inner) @ dk)
    d = -sym(np.kron(sigma, lam_inv))
    return _assemble(a, cross, d)


class ConcavityCheck(NamedTuple):
    holds: bool
    condition: str
    lhs: float
    rhs: float


class LogConcavityWarning(UserWarning):
    """The sufficient log-concavity condition of a prior is not met."""


def log_concavity_check(prior, k, p, known_b=False):
    """Evaluate the sufficient log-concavity condition of ``prior``.

    The conditions are sufficient, not necessary.
    """
    if isinstance(prior, FlatPrior):
        return ConcavityCheck(True, "flat prior: likelihood is log-concave", 0.0, 0.0)
    if isinstance(prior, GeneralIndependentPrior):
        ok = bool(
            np.linalg.eigvalsh(prior.psi_hessian)[0] >= -1e-12
            and np.linalg.eigvalsh(prior.lambda_inv_hessian)[0] >= -1e-12
        )
        return ConcavityCheck(ok, "both negative Hessian blocks PSD", 0.0, 0.0)
    lam = prior.lam
    if isinstance(prior, NormalWishartPrior):
        lhs = 0.5 * (lam - k - p - 1)
        return ConcavityCheck(lhs >= 0.5 * k, "(lam - k - p - 1)/2 >= k/2", lhs, 0.5 * k)
    if known_b:
        lhs = lam - 0.5 * (2 * k + 1)
        return ConcavityCheck(lhs >= 0, "lam - (2k + 1)/2 >= 0", lhs, 0.0)
    lhs = lam - 0.5 * (k + p + 1)
    return ConcavityCheck(lhs >= 0.5 * p, "lam - (k + p + 1)/2 >= p/2", lhs, 0.5 * p)


def warn_if_not_log_concave(prior, k, p):
    chk = log_concavity_check(prior, k, p)
    if not chk.holds:
        warnings.warn(
            f"prior not certified log-concave: {chk.condition} fails "
            f"({chk.lhs:g} < {chk.rhs:g}); Laplace results are heuristic",
            LogConcavityWarning,
            stacklevel=3,
        )
    return chk


# named presets used by the simulation studies
PRESETS = ("wishart-certain", "wishart-uncertain", "mgig-certain", "mgig-uncertain")
LAMBDA_LEVELS = {"certain": 1e-3, "uncertain": 1e3}


def preset(name, k, p, B0, lambda_scale=None, scale=1e-3):
    """Build one of the named simulation priors.

    ``wishart-*`` uses ``lam = 2k + 2`` and ``Phi = scale I``; ``mgig-*`` uses
    ``lam = k + 1`` and ``Psi = Phi = scale I``. The suffix selects
    ``Lambda = 1e-3 I`` (certain) or ``1e3 I`` (uncertain) unless
    ``lambda_scale`` overrides it.
    """
    family, _, level = name.partition("-")
    if family not in ("wishart", "mgig"):
        raise ValueError(f"unknown prior preset {name!r}")
    if lambda_scale is None:
        if level not in LAMBDA_LEVELS:
            raise ValueError(f"unknown prior preset {name!r}")
        lambda_scale = LAMBDA_LEVELS[level]
    Lambda = lambda_scale * np.eye(p)
    if family == "wishart":
        return NormalWishartPrior(2 * k + 2, scale * np.eye(k), B0, Lambda)
    return NormalMGIGPrior(k + 1, scale * np.eye(k), scale * np.eye(k), B0, Lambda)
