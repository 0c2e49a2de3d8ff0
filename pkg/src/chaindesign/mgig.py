"""Matrix generalized inverse Gaussian (MGIG) distribution.

Mode (closed-form Riccati solution), importance sampling, normalizing
constants and KL divergences between posterior and prior laws of ``Omega``.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, optimize, stats
from scipy.special import digamma, logsumexp, multigammaln

from .linalg import NotPositiveDefiniteError, inv_spd, is_pd, log_det, sym, sym_sqrt
from .model import ChainGraphParams
from .priors import (
    MGIGParams,
    NormalMGIGPrior,
    NormalWishartPrior,
    NWPosterior,
    WishartParams,
    nmgig_posterior,
    nw_posterior,
    prior_conditional,
)

__all__ = [
    "DegenerateSamplerError",
    "WeightedSample",
    "LogNormalizer",
    "KLEstimate",
    "mgig_mode",
    "joint_map_nmgig",
    "wishart_rvs",
    "sample_mgig",
    "sample_nw_posterior",
    "log_normalizer_estimate",
    "wishart_kl",
    "kl_posterior_prior",
    "ess",
]

MIN_ESS_FRACTION = 0.05


class DegenerateSamplerError(RuntimeError):
    """Importance weights collapsed onto too few draws."""


def ess(log_weights):
    """Effective sample size ``(sum w)^2 / sum w^2`` from log weights."""
    lw = np.asarray(log_weights, dtype=float)
    return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))


def _check_mgig(params):
    for name, a in (("Psi", params.Psi), ("Phi", params.Phi)):
        if not is_pd(a):
            raise NotPositiveDefiniteError(f"{name} must be positive definite")


def mgig_mode(params):
    """Unique PD root of ``Omega Phi Omega - 2 beta Omega - Psi = 0``.

    With ``S = Phi^{1/2} Psi Phi^{1/2}`` the root is
    ``Phi^{-1/2} (beta I + (beta^2 I + S)^{1/2}) Phi^{-1/2}``.
    """
    _check_mgig(params)
    k, beta = params.k, params.beta
    w, v = np.linalg.eigh(params.Phi)
    half = (v * np.sqrt(w)) @ v.T
    ihalf = (v / np.sqrt(w)) @ v.T
    s = sym(half @ params.Psi @ half)
    W = beta * np.eye(k) + sym_sqrt(beta**2 * np.eye(k) + s)
    omega = sym(ihalf @ W @ ihalf)
    # one Newton step on the Riccati residual recovers accuracy lost to ill-conditioned Phi
    a = omega @ params.Phi - beta * np.eye(k)
    res = omega @ params.Phi @ omega - 2 * beta * omega - params.Psi
    return sym(omega + linalg.solve_sylvester(a, a.T, -res))


def joint_map_nmgig(prior, data):
    """Joint posterior mode of ``(Omega, B)`` under a Normal-MGIG prior.

    Profiling ``B`` out leaves an MGIG kernel with index shifted by ``-p/2``,
    so ``Omega_hat`` solves ``Omega Phi_hat Omega - 2 a Omega - Psi_hat = 0``
    with ``a = lam + n/2 - (k+1)/2 - p/2``; ``B_hat`` is the conditional mean.
    """
    post = nmgig_posterior(prior, data)
    m = post.marginal
    omega = mgig_mode(MGIGParams(m.lam - 0.5 * prior.p, m.Psi, m.Phi))
    return ChainGraphParams(B=post.conditional.mean(omega), omega=omega)


def wishart_rvs(df, scale, count, rng):
    """Bartlett draws from ``W(df, scale)``; returns shape ``(count, k, k)``."""
    scale = np.atleast_2d(scale)
    k = scale.shape[0]
    if not df > k - 1:
        raise ValueError("Wishart degrees of freedom must exceed k - 1")
    chol = np.linalg.cholesky(scale)
    a = np.zeros((count, k, k))
    idx = np.arange(k)
    a[:, idx, idx] = np.sqrt(rng.chisquare(df - idx, size=(count, k)))
    rows, cols = np.tril_indices(k, -1)
    a[:, rows, cols] = rng.standard_normal((count, rows.size))
    la = chol @ a
    return la @ np.swapaxes(la, -1, -2)


def _wishart_expectations(q):
    """``E[log|W|]``, ``E[W]``, ``E[W^{-1}]`` under ``W(df, scale)``."""
    k, df = q.k, q.df
    e_logdet = digamma(0.5 * (df - np.arange(k))).sum() + k * np.log(2) + log_det(q.scale)
    e_inv = inv_spd(q.scale) / (df - k - 1) if df > k + 1 else None
    return e_logdet, q.mean, e_inv


# ---------------------------------------------------------------------------
# proposals


class _WishartProposal:
    """``W(2 lam, Phi^{-1})``; the importance weight is ``exp(-tr(Psi W^{-1})/2)``."""

    name = "wishart"

    def __init__(self, params):
        if not 2 * params.lam > params.k - 1:
            raise ValueError("proposal undefined; increase lambda (need 2*lambda > k - 1)")
        self.params = params
        self.q = WishartParams(2 * params.lam, inv_spd(params.Phi))
        self.log_z = self.q.log_normalizer()

    def draw(self, count, rng):
        omegas = wishart_rvs(self.q.df, self.q.scale, count, rng)
        inv = np.linalg.inv(omegas)
        _, ld = np.linalg.slogdet(omegas)
        lw = -0.5 * np.einsum("ij,nji->n", self.params.Psi, inv)
        b = self.params.beta
        # normalized proposal log density on Omega
        log_q = b * ld - 0.5 * np.einsum("ij,nji->n", self.params.Phi, omegas) - self.log_z
        return omegas, lw, log_q, {"logdet": ld, "inv": inv}

    def expected(self):
        e_ld, e_w, e_inv = _wishart_expectations(self.q)
        return {"log_q": -float(stats.wishart(self.q.df, self.q.scale).entropy()), "logdet": e_ld,
                "mean": e_w, "inv": e_inv}


class _LogCholeskyProposal:
    """Laplace fit of the MGIG law in log-Cholesky coordinates.

    ``Omega = L L^T`` with ``L_ii = exp(theta_ii)``. A multivariate-t (or
    Gaussian when ``df`` is None) is centred at the mode in ``theta`` with the
    inverse negative Hessian as scale.
    """

    name = "laplace"

    def __init__(self, params, df=20.0):
        self.params = params
        k = params.k
        self.k = k
        self.rows, self.cols = np.tril_indices(k)
        self.diag = np.flatnonzero(self.rows == self.cols)
        # log|dOmega/dtheta| = k log 2 + sum_i (k - i + 1) theta_ii, i from 0
        self.jac_coef = (k - self.rows[self.diag] + 1).astype(float)
        start = np.linalg.cholesky(mgig_mode(params))[self.rows, self.cols]
        start[self.diag] = np.log(start[self.diag])
        with warnings.catch_warnings():
            # line-search noise near the optimum is harmless; the Hessian is rebuilt below
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(
                lambda t: -float(self.log_target(t[None])[0]),
                start,
                jac=lambda t: -self._grad(t),
                method="BFGS",
                options={"gtol": 1e-9},
            )
        mode = res.x
        hess = self._hessian(mode)
        cov = sym(np.linalg.inv(hess))
        self.df = df
        if df is None:
            self.q = stats.multivariate_normal(mode, cov)
            self.entropy = float(self.q.entropy())
        else:
            self.q = stats.multivariate_t(mode, cov, df=df)
            self.entropy = float(self.q.entropy())
        self.mode = mode

    def _chol(self, theta):
        L = np.zeros(theta.shape[:-1] + (self.k, self.k))
        L[..., self.rows, self.cols] = theta
        d = np.arange(self.k)
        L[..., d, d] = np.exp(L[..., d, d])
        return L

    def log_jacobian(self, theta):
        return self.k * np.log(2.0) + theta[..., self.diag] @ self.jac_coef

    def log_target(self, theta):
        return self.params.log_density(self.to_omega(theta)) + self.log_jacobian(theta)

    def to_omega(self, theta):
        L = self._chol(theta)
        return L @ np.swapaxes(L, -1, -2)

    def _grad(self, theta):
        p = self.params
        L = self._chol(theta)
        omega = L @ L.T
        oinv = inv_spd(omega)
        g = -p.Phi @ L + oinv @ p.Psi @ np.linalg.inv(L).T
        out = g[self.rows, self.cols]
        d = self.diag
        out[d] = out[d] * np.exp(theta[d]) + 2 * p.beta + self.jac_coef
        return out

    def _hessian(self, theta, h=1e-5):
        m = theta.size
        hess = np.empty((m, m))
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            hess[i] = (self._grad(theta - e) - self._grad(theta + e)) / (2 * h)
        return sym(hess)

    def draw(self, count, rng):
        theta = np.asarray(self.q.rvs(size=count, random_state=rng)).reshape(count, -1)
        omegas = self.to_omega(theta)
        log_jac = self.log_jacobian(theta)
        log_q = self.q.logpdf(theta) - log_jac
        lw = self.params.log_density(omegas) - log_q
        logdet = 2 * theta[:, self.diag].sum(axis=1)
        return omegas, lw, log_q, {"logdet": logdet, "log_q": log_q, "log_jac": log_jac}

    def expected(self):
        e_log_jac = self.k * np.log(2.0) + self.mode[self.diag] @ self.jac_coef
        return {"log_q": -self.entropy - e_log_jac, "logdet": 2 * self.mode[self.diag].sum()}


PROPOSALS = ("wishart", "laplace", "auto")


@dataclass(frozen=True)
class WeightedSample:
    """Importance-weighted MGIG draws.

    ``log_weights`` are ``log p~(Omega) - log q(Omega)`` up to the constant
    ``log_scale``; for the Wishart proposal ``log_scale`` is the proposal
    normalizer and every weight equals ``exp(-tr(Psi Omega^{-1})/2) <= 1``.
    """

    omegas: np.ndarray
    log_weights: np.ndarray
    proposal: str
    log_scale: float
    extras: dict = field(repr=False, default_factory=dict)
    fitted: object = field(repr=False, default=None)

    @property
    def count(self):
        return self.log_weights.size

    @property
    def weights(self):
        """Weights in ``(0, 1]``."""
        if self.proposal == "wishart":
            return np.exp(self.log_weights)
        return np.exp(self.log_weights - self.log_weights.max())

    @property
    def normalized_weights(self):
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self):
        return ess(self.log_weights)

    def mean(self, values):
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.normalized_weights, values, axes=(0, 0))


def _spawn(seed, workers):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(workers)]


def _chunks(count, workers):
    base, extra = divmod(count, workers)
    return [base + (i < extra) for i in range(workers)]


def _draw(prop, count, seed, workers):
    workers = max(1, min(int(workers), count))
    rngs = _spawn(seed, workers)
    sizes = _chunks(count, workers)
    if workers == 1:
        parts = [prop.draw(sizes[0], rngs[0])]
    else:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(prop.draw, sizes, rngs))
    omegas = np.concatenate([p[0] for p in parts])
    lw = np.concatenate([p[1] for p in parts])
    log_q = np.concatenate([p[2] for p in parts])
    extras = {key: np.concatenate([p[3][key] for p in parts]) for key in parts[0][3]}
    extras["log_q"] = log_q
    return omegas, lw, extras


def _make_proposal(params, proposal, count, seed, workers, df):
    """Pick the proposal; ``auto`` keeps the Wishart draws when their ESS is healthy."""
    if proposal not in PROPOSALS:
        raise ValueError(f"proposal must be one of {PROPOSALS}")
    if proposal in ("wishart", "auto"):
        prop = _WishartProposal(params)
        draws = _draw(prop, count, seed, workers)
        if proposal == "wishart" or ess(draws[1]) >= 0.5 * count:
            return prop, draws
    prop = _LogCholeskyProposal(params, df=df)
    return prop, _draw(prop, count, seed, workers)


def sample_mgig(params, count, seed, workers=1, proposal="wishart", df=20.0):
    """Importance sample ``MGIG(lam, Psi, Phi)``.

    The default proposal is ``W(2 lam, Phi^{-1})`` with weight
    ``exp(-tr(Psi Omega^{-1})/2)``. ``proposal="laplace"`` uses a fitted
    log-Cholesky t proposal, which stays efficient when ``Psi`` is large;
    ``"auto"`` falls back to it when the Wishart ESS drops below half the
    draws. Results depend only on ``(seed, workers)``.
    """
    _check_mgig(params)
    prop, (omegas, lw, extras) = _make_proposal(params, proposal, count, seed, workers, df)
    log_scale = prop.log_z if prop.name == "wishart" else 0.0
    return WeightedSample(omegas, lw, prop.name, log_scale, extras, prop)


def sample_nw_posterior(posterior, count, seed, include_B=False):
    """Draws of ``Omega`` from a Wishart law (and of ``B`` given ``Omega`` if asked)."""
    marginal = posterior.marginal if isinstance(posterior, NWPosterior) else posterior
    rng = np.random.default_rng(seed)
    omegas = wishart_rvs(marginal.df, marginal.scale, count, rng)
    if not include_B:
        return omegas
    return omegas, posterior.conditional.sample(omegas, rng)


class LogNormalizer(NamedTuple):
    value: float
    stderr: float
    ess: float


def _log_mean_weight(lw):
    n = lw.size
    z = logsumexp(lw) - np.log(n)
    w = np.exp(lw - z)
    return z, float(np.std(w, ddof=1) / np.sqrt(n)) if n > 1 else np.inf


def log_normalizer_estimate(params, count, seed, proposal="wishart", workers=1, df=20.0):
    """``log`` of the MGIG normalizing constant with a delta-method standard error.

    For the Wishart proposal this is ``log Z_W(2 lam, Phi^{-1}) + log mean(w)``.
    """
    s = sample_mgig(params, count, seed, workers=workers, proposal=proposal, df=df)
    z, se = _log_mean_weight(s.log_weights)
    return LogNormalizer(float(s.log_scale + z), se, s.ess)


# ---------------------------------------------------------------------------
# KL divergences


class KLEstimate(NamedTuple):
    value: float
    stderr: float
    ess: float
    method: str


def wishart_kl(p, q):
    """Exact ``KL(W(df1, V1) || W(df0, V0))``."""
    k = p.k
    n1, n0 = p.df, q.df
    half = 0.5 * (n1 - np.arange(k))
    psi = digamma(half).sum()
    return float(
        0.5 * (n1 - n0) * psi
        - 0.5 * n0 * log_det(p.scale)
        + 0.5 * n0 * log_det(q.scale)
        + 0.5 * n1 * (np.trace(np.linalg.solve(q.scale, p.scale)) - k)
        - multigammaln(0.5 * n1, k)
        + multigammaln(0.5 * n0, k)
    )


def _mgig_kl(post, prior, count, seed, proposal="auto", workers=1, df=20.0, log_z0=None):
    """IS estimate of ``KL(MGIG_post || MGIG_prior)``.

    Uses ``KL = E[log w] - log Z_1 + E[log q - log p~_0] + log Z_0`` under the
    posterior, with the proposal mean of the tractable part of
    ``log q - log p~_0`` as a control variate.
    """
    s = sample_mgig(post, count, seed, workers=workers, proposal=proposal, df=df)
    if s.ess < MIN_ESS_FRACTION * count:
        raise DegenerateSamplerError("importance sampler degenerate; increase count")
    ex, lw, n = s.extras, s.log_weights, s.count
    wn = s.normalized_weights
    h = ex["log_q"] - prior.log_density(s.omegas)
    e = s.fitted.expected()
    if s.proposal == "wishart" and e["inv"] is not None:
        c = h
        mu_c = (
            e["log_q"]
            - prior.beta * e["logdet"]
            + 0.5 * np.sum(prior.Psi * e["inv"])
            + 0.5 * np.sum(prior.Phi * e["mean"])
        )
    else:
        c = ex["log_q"] - prior.beta * ex["logdet"]
        mu_c = e["log_q"] - prior.beta * e["logdet"]
    log_z1 = logsumexp(lw) - np.log(n)
    if log_z0 is None:
        z0 = log_normalizer_estimate(prior, count, [*np.atleast_1d(seed), 1], proposal="auto",
                                     workers=workers, df=df)
        log_z0 = (z0.value, z0.stderr)
    value = (wn @ lw - log_z1) + (wn @ h - (c.mean() - mu_c)) + log_z0[0]
    infl = n * wn * (lw - wn @ lw) - (n * wn - 1.0) + n * wn * (h - wn @ h) - (c - c.mean())
    se = float(np.sqrt(np.mean(infl**2) / n + log_z0[1] ** 2))
    return KLEstimate(float(value), se, s.ess, f"importance-{s.proposal}")


def _conditional_kl_terms(post_c, prior_c, k):
    """Pieces of ``KL(B | Omega)`` between two conditionals sharing column covariance ``Omega``.

    With ``R(Omega) = A Omega + c`` the mean gap, the KL equals
    ``const + (tr(A'P A Omega) + 2 tr(A'P c) + tr(c'P c Omega^{-1}))/2``
    where ``P = prior row precision``.
    """
    p = prior_c.row_cov.shape[0]
    P = inv_spd(prior_c.row_cov)
    const = 0.5 * (
        k * np.trace(P @ post_c.row_cov) - p * k + k * (log_det(prior_c.row_cov) - log_det(post_c.row_cov))
    )
    A = post_c.left - prior_c.left
    c = post_c.offset - prior_c.offset
    return const, sym(A.T @ P @ A), float(np.trace(A.T @ P @ c)), sym(c.T @ P @ c)


def kl_posterior_prior(prior, data, count=4000, seed=0, target="omega", proposal="auto",
                       workers=1, df=20.0, log_z0=None):
    """``KL(posterior || prior)`` for Normal-Wishart and Normal-MGIG priors.

    ``target="omega"`` (default) compares the marginal laws of ``Omega``;
    ``target="joint"`` adds the expected divergence of ``B | Omega``. The
    Normal-Wishart case is exact. The Normal-MGIG case is importance sampled.
    The return value carries a standard error and the ESS.

    Parameters
    ----------
    log_z0 : tuple, optional
        Precomputed ``(log Z, stderr)`` of the prior MGIG law, reused across calls.
    """
    if target not in ("omega", "joint"):
        raise ValueError("target must be 'omega' or 'joint'")
    if not isinstance(prior, (NormalWishartPrior, NormalMGIGPrior)):
        raise TypeError("KL is defined for Normal-Wishart and Normal-MGIG priors")
    k = prior.k
    if isinstance(prior, NormalWishartPrior):
        post = nw_posterior(prior, data)
        prior_w = WishartParams(prior.lam, inv_spd(prior.Phi))
        value = wishart_kl(post.marginal, prior_w)
        if target == "joint":
            const, quad_w, lin, quad_inv = _conditional_kl_terms(
                post.conditional, prior_conditional(prior), k
            )
            _, e_w, e_inv = _wishart_expectations(post.marginal)
            value += const + 0.5 * np.sum(quad_w * e_w) + lin
            if quad_inv.any():
                value += 0.5 * np.sum(quad_inv * e_inv)
        return KLEstimate(float(value), 0.0, float(count), "analytic")
    if isinstance(prior, NormalMGIGPrior):
        post = nmgig_posterior(prior, data)
        est = _mgig_kl(post.marginal, prior.mgig, count, seed, proposal, workers, df, log_z0)
        if target == "joint":
            s = sample_mgig(post.marginal, count, seed, workers=workers, proposal=proposal, df=df)
            const, quad_w, lin, quad_inv = _conditional_kl_terms(
                post.conditional, prior_conditional(prior), k
            )
            extra = s.mean(
                0.5 * np.einsum("ij,nji->n", quad_w, s.omegas)
                + 0.5 * np.einsum("ij,nji->n", quad_inv, np.linalg.inv(s.omegas))
            )
            est = est._replace(value=float(est.value + const + lin + extra))
        return est
    raise TypeError("KL is defined for Normal-Wishart and Normal-MGIG priors")
