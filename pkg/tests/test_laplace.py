import warnings

import numpy as np
import pytest

from chaindesign.laplace import (
    d_optimality_score,
    info_bound,
    info_gain,
    marginal_precision,
    marginal_precision_generic,
)
from chaindesign.linalg import NotPositiveDefiniteError, duplication, vech_size
from chaindesign.model import ChainGraphParams
from chaindesign.priors import (
    FlatPrior,
    GeneralIndependentPrior,
    LogConcavityWarning,
    NormalMGIGPrior,
    NormalWishartPrior,
)

from conftest import random_pd

pytestmark = pytest.mark.filterwarnings("ignore::chaindesign.priors.LogConcavityWarning")


def _prior(kind, rng, k, p):
    B0 = rng.standard_normal((p, k))
    if kind == "flat":
        return FlatPrior()
    if kind == "wishart":
        return NormalWishartPrior(2 * k + 2, random_pd(rng, k), B0, random_pd(rng, p))
    if kind == "mgig":
        return NormalMGIGPrior(k + 1, random_pd(rng, k), random_pd(rng, k), B0, random_pd(rng, p))
    return GeneralIndependentPrior(random_pd(rng, vech_size(k)), random_pd(rng, k * p))


def test_flat_hand_case():
    out = marginal_precision(FlatPrior(), ChainGraphParams(np.zeros((1, 2)), np.eye(2)), np.ones((10, 1)), 10)
    np.testing.assert_allclose(out.matrix, np.diag([5.0, 10.0, 5.0]))
    assert not out.depends_on_design


@pytest.mark.parametrize("kind", ["flat", "wishart"])
def test_design_invariance(rng, kind):
    k, p, n = 3, 2, 25
    prior = _prior(kind, rng, k, p)
    params = ChainGraphParams(rng.standard_normal((p, k)), random_pd(rng, k))
    a = marginal_precision(prior, params, rng.standard_normal((n, p)), n).matrix
    b = marginal_precision(prior, params, 10 * rng.standard_normal((n, p)), n).matrix
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_nmgig_null_design(rng):
    k, p, n = 3, 2, 12
    prior = _prior("mgig", rng, k, p)
    omega = random_pd(rng, k)
    sigma = np.linalg.inv(omega)
    dk = duplication(k)
    expected = (n / 2 + prior.alpha) * dk.T @ np.kron(sigma, sigma) @ dk + dk.T @ np.kron(
        sigma, sigma @ prior.Psi @ sigma
    ) @ dk
    out = marginal_precision(prior, ChainGraphParams(prior.B0, omega), np.zeros((n, p)), n)
    np.testing.assert_allclose(out.matrix, expected, rtol=1e-12)
    assert out.depends_on_design


def test_nmgig_design_sensitivity(rng):
    k, p, n = 3, 2, 12
    prior = _prior("mgig", rng, k, p)
    params = ChainGraphParams(prior.B0, random_pd(rng, k))
    base = marginal_precision(prior, params, np.zeros((n, p)), n).matrix
    with_x = marginal_precision(prior, params, rng.standard_normal((n, p)), n).matrix
    assert np.linalg.eigvalsh(with_x - base)[-1] > 1e-6


@pytest.mark.parametrize("kind", ["flat", "wishart", "mgig", "general"])
def test_generic_matches_closed_form(rng, kind):
    for _ in range(10):
        k, p = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        n = int(rng.integers(p + 1, 30))
        prior = _prior(kind, rng, k, p)
        params = ChainGraphParams(rng.standard_normal((p, k)), random_pd(rng, k))
        X = rng.standard_normal((n, p))
        closed = marginal_precision(prior, params, X, n, check=False)
        generic = marginal_precision_generic(prior, params, X, n)
        np.testing.assert_allclose(generic.matrix, closed.matrix, rtol=1e-8, atol=1e-10)
        assert generic.depends_on_design == closed.depends_on_design


def test_flat_generic_needs_full_rank(rng):
    params = ChainGraphParams(np.zeros((2, 2)), np.eye(2))
    with pytest.raises(np.linalg.LinAlgError):
        marginal_precision_generic(FlatPrior(), params, np.zeros((5, 2)), 5)


def test_non_pd_omega():
    with pytest.raises(NotPositiveDefiniteError):
        marginal_precision(FlatPrior(), ChainGraphParams(np.zeros((1, 2)), -np.eye(2)), np.ones((3, 1)), 3)


def test_warns_when_not_certified(rng):
    prior = NormalWishartPrior(12, np.eye(5), np.zeros((5, 5)), np.eye(5))
    params = ChainGraphParams(np.zeros((5, 5)), np.eye(5))
    with pytest.warns(LogConcavityWarning):
        marginal_precision(prior, params, np.zeros((10, 5)), 10)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        marginal_precision(prior, params, np.zeros((10, 5)), 10, check=False)


class TestInfoGain:
    def test_zero_cases(self, rng):
        prior = _prior("mgig", rng, 3, 2)
        omega = random_pd(rng, 3)
        assert not info_gain(prior, omega, np.zeros((5, 2))).any()
        flat_b0 = NormalMGIGPrior(prior.lam, prior.Psi, prior.Phi, np.zeros((2, 3)), prior.Lambda)
        assert not info_gain(flat_b0, omega, rng.standard_normal((5, 2))).any()
        assert not info_bound(flat_b0, ChainGraphParams(np.zeros((2, 3)), omega)).any()

    def test_monotone(self, rng):
        prior = _prior("mgig", rng, 3, 2)
        omega, X0 = random_pd(rng, 3), rng.standard_normal((6, 2))
        eigs = [np.linalg.eigvalsh(info_gain(prior, omega, np.sqrt(t) * X0)) for t in (0.1, 1, 10, 100)]
        for a, b in zip(eigs, eigs[1:]):
            assert np.all(b >= a - 1e-12)
        # Loewner order is stronger than sorted eigenvalues
        gains = [info_gain(prior, omega, np.sqrt(t) * X0) for t in (0.1, 1, 10, 100)]
        for a, b in zip(gains, gains[1:]):
            assert np.linalg.eigvalsh(b - a)[0] >= -1e-12

    def test_bound_chain(self, rng):
        for _ in range(50):
            k, p = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            prior = _prior("mgig", rng, k, p)
            params = ChainGraphParams(prior.B0, random_pd(rng, k))
            X = 10.0 ** rng.uniform(-2, 2) * rng.standard_normal((int(rng.integers(1, 15)), p))
            gain = info_gain(prior, params.omega, X)
            bound = info_bound(prior, params)
            scale = max(1.0, np.abs(bound).max())
            assert np.linalg.eigvalsh(gain)[0] >= -1e-10 * scale
            assert np.linalg.eigvalsh(bound - gain)[0] >= -1e-10 * scale

    def test_sharpness(self, rng):
        prior = _prior("mgig", rng, 3, 2)
        params = ChainGraphParams(prior.B0, random_pd(rng, 3))
        X = 1e4 * rng.standard_normal((8, 2))
        bound = info_bound(prior, params)
        gap = np.linalg.norm(bound - info_gain(prior, params.omega, X)) / np.linalg.norm(bound)
        assert gap < 1e-6

    def test_inner_form(self, rng):
        prior = _prior("mgig", rng, 3, 2)
        omega = random_pd(rng, 3)
        X = rng.standard_normal((5, 2))
        inner = info_gain(prior, omega, X, inner=True)
        sigma = np.linalg.inv(omega)
        dk = duplication(3)
        np.testing.assert_allclose(info_gain(prior, omega, X), dk.T @ np.kron(sigma, inner) @ dk, rtol=1e-12)
        assert inner.shape == (3, 3)

    def test_general_bound_chain(self, rng):
        k, p = 3, 2
        prior = _prior("general", rng, k, p)
        params = ChainGraphParams(rng.standard_normal((p, k)), random_pd(rng, k))
        bound = info_bound(prior, params)
        for scale in (0.1, 1.0, 1e4):
            gain = info_gain(prior, params.omega, scale * rng.standard_normal((6, p)), B=params.B)
            assert np.linalg.eigvalsh(gain)[0] >= -1e-10 * np.abs(bound).max()
            assert np.linalg.eigvalsh(bound - gain)[0] >= -1e-10 * np.abs(bound).max()
        assert np.linalg.norm(bound - gain) / np.linalg.norm(bound) < 1e-6


class TestDOptimality:
    def test_null(self, rng):
        Lam = random_pd(rng, 3)
        assert d_optimality_score(np.zeros((4, 3)), Lam) == pytest.approx(-np.linalg.slogdet(Lam)[1])

    def test_append_row(self, rng):
        Lam = random_pd(rng, 3)
        X = rng.standard_normal((4, 3))
        for _ in range(10):
            X2 = np.vstack([X, rng.standard_normal((1, 3))])
            assert d_optimality_score(X2, Lam) >= d_optimality_score(X, Lam)
            X = X2

    def test_scaling(self, rng):
        Lam = random_pd(rng, 2)
        X = rng.standard_normal((3, 2))
        assert d_optimality_score(2 * X, Lam) > d_optimality_score(X, Lam)
