"""Gaussian chain graph model ``Y_i | X_i ~ N(Omega^{-1} B^T X_i, Omega^{-1})``."""

from dataclasses import dataclass

import numpy as np

from .linalg import (
    NotPositiveDefiniteError,
    cholesky,
    duplication,
    inv_spd,
    is_pd,
    log_det,
    sym,
    unvec,
    unvech,
    vec,
    vech,
    vech_size,
)

__all__ = [
    "ChainGraphParams",
    "Dataset",
    "log_likelihood",
    "response_mean",
    "sample_responses",
    "loglik_hessian",
    "fisher_information",
    "mle",
    "marginal_coefficients",
    "pack",
    "unpack",
]


@dataclass(frozen=True)
class ChainGraphParams:
    """Conditional coefficients ``B`` (p x k) and response precision ``omega`` (k x k)."""

    B: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        k = omega.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(-1, k)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "B", B)

    @property
    def k(self):
        return self.omega.shape[0]

    @property
    def p(self):
        return self.B.shape[0]


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def k(self):
        return self.Y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]

    def gram(self):
        """Return ``(X^T X, X^T Y, Y^T Y)``."""
        X, Y = self.X, self.Y
        return X.T @ X, X.T @ Y, Y.T @ Y


def pack(params):
    """Stack ``(vech Omega, vec B)`` into one coordinate vector."""
    return np.concatenate([vech(params.omega), vec(params.B)])


def unpack(theta, k, p):
    m = vech_size(k)
    return ChainGraphParams(B=unvec(theta[m:], p, k), omega=unvech(theta[:m]))


def _require_pd(omega):
    if not is_pd(omega):
        raise NotPositiveDefiniteError("Omega must be positive definite")


def log_likelihood(data, params):
    """Exact Gaussian log likelihood summed over rows."""
    omega, B = params.omega, params.B
    _require_pd(omega)
    xtx, xty, yty = data.gram()
    n, k = data.n, data.k
    sigma = inv_spd(omega)
    return float(
        0.5 * n * log_det(omega)
        - 0.5 * n * k * np.log(2 * np.pi)
        + np.sum(xty * B)
        - 0.5 * np.sum(yty * omega)
        - 0.5 * np.sum((xtx @ B) * (B @ sigma))
    )


def response_mean(X, params):
    """Mean ``X B Omega^{-1}`` of the responses."""
    X = np.asarray(X, dtype=float)
    return X @ params.B @ inv_spd(params.omega)


def sample_responses(X, params, seed):
    """Draw ``Y`` row-wise from the model; deterministic given ``seed``."""
    X = np.asarray(X, dtype=float)
    _require_pd(params.omega)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((X.shape[0], params.k))
    # z L^{-T} has covariance (L L^T)^{-1} = Sigma
    chol = cholesky(params.omega)
    from scipy.linalg import solve_triangular

    noise = solve_triangular(chol, z.T, lower=True, trans="T").T
    return response_mean(X, params) + noise


def _blocks(omega, B, xtx, n):
    """Negative Hessian blocks ``(A, G, Dblk)`` of the log likelihood."""
    k = omega.shape[0]
    dk = duplication(k)
    sigma = inv_spd(omega)
    btxb = sigma @ B.T @ xtx @ B @ sigma
    a = dk.T @ (0.5 * n * np.kron(sigma, sigma) + np.kron(sigma, btxb)) @ dk
    g = -dk.T @ np.kron(sigma, sigma @ B.T @ xtx)
    d = np.kron(sigma, xtx)
    return sym(a), g, sym(d)


def loglik_hessian(params, X, n=None):
    """Analytic Hessian of :func:`log_likelihood` in ``(vech Omega, vec B)``.

    It depends on the data only through ``X`` (and ``n``); ``Y`` drops out.
    """
    _require_pd(params.omega)
    X = np.asarray(X, dtype=float).reshape(-1, params.p)
    n = X.shape[0] if n is None else n
    a, g, d = _blocks(params.omega, params.B, X.T @ X, n)
    return -np.block([[a, g], [g.T, d]])


def fisher_information(params, X, n=None):
    """Fisher information, ordered ``(vech Omega, vec B)``."""
    return -loglik_hessian(params, X, n)


def mle(data):
    """Maximum likelihood estimate through the marginal regression."""
    X, Y = data.X, data.Y
    n, k, p = data.n, data.k, data.p
    if p > 0:
        xtx = X.T @ X
        if np.linalg.matrix_rank(xtx) < p:
            raise np.linalg.LinAlgError("design not full rank")
        gamma = np.linalg.solve(xtx, X.T @ Y)
        resid = Y - X @ gamma
    else:
        gamma = np.zeros((0, k))
        resid = Y
    sigma = sym(resid.T @ resid / n)
    if n <= k or not is_pd(sigma):
        raise np.linalg.LinAlgError("need n > k (residual covariance singular)")
    omega = inv_spd(sigma)
    return ChainGraphParams(B=gamma @ omega, omega=omega)


def marginal_coefficients(params):
    """Marginal regression coefficients ``B Omega^{-1}``."""
    return params.B @ inv_spd(params.omega)
