"""Simulation studies: covariance models, designs, KL and Stein's-loss experiments."""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimators import partial_correlation, steins_loss
from .linalg import NotPositiveDefiniteError, cholesky, inv_spd, is_pd
from .mgig import joint_map_nmgig, kl_posterior_prior, log_normalizer_estimate, sample_mgig, sample_nw_posterior
from .model import Dataset
from .priors import NormalMGIGPrior, NormalWishartPrior, PRESETS, nmgig_posterior, nw_posterior, preset

__all__ = [
    "MODEL_IDS",
    "DESIGN_KINDS",
    "ExperimentConfig",
    "ToyConfig",
    "ResultRecord",
    "covariance_model",
    "make_design",
    "simulation_prior",
    "map_estimate",
    "run_kl_experiment",
    "run_stein_experiment",
    "run_toy",
    "summarize",
    "records_to_csv",
    "CONVENTIONS",
]

MODEL_IDS = (1, 2, 3, 4, 5, 6)
DESIGN_KINDS = ("null", "random", "specific")
RECORD_FIELDS = ("model_id", "prior", "lambda_level", "design", "n", "replicate", "metric", "value")

# interpretation choices surfaced in output metadata
CONVENTIONS = {
    "model3": "two diagonal covariance blocks of sizes k//2 and k-k//2, within-block 0.5",
    "model5": "circle closed by the corner entries omega_1k = omega_k1 = 0.9",
    "random_design": "orthonormal columns, X^T X = I_p",
    "coefficients": "B = I_p in every design arm",
    "wishart_prior_mean": "B0 = B Sigma so that the prior mean of B at the true Omega is B",
    "kl_target": "KL between the posterior and prior laws of Omega",
}


def covariance_model(model_id, k):
    """True precision matrix of simulation model ``model_id`` (1 to 6).

    1 AR(1) covariance ``0.7^|i-j|``; 2 AR(2) precision; 3 two-block
    covariance; 4 star precision; 5 circle precision; 6 full precision.
    """
    if model_id not in MODEL_IDS:
        raise ValueError(f"model_id must be one of {MODEL_IDS}")
    min_k = 3 if model_id == 5 else 2
    if k < min_k:
        raise ValueError(f"model {model_id} needs k >= {min_k}")
    i = np.arange(k)
    gap = np.abs(i[:, None] - i[None, :])
    if model_id == 1:
        omega = inv_spd(0.7**gap)
    elif model_id == 2:
        omega = np.select([gap == 0, gap == 1, gap == 2], [1.0, 0.5, 0.25], 0.0)
    elif model_id == 3:
        block = i >= k // 2
        sigma = np.where(block[:, None] == block[None, :], 0.5, 0.0)
        np.fill_diagonal(sigma, 1.0)
        omega = inv_spd(sigma)
    elif model_id == 4:
        omega = np.eye(k)
        omega[0, 1:] = omega[1:, 0] = 0.1
    elif model_id == 5:
        omega = np.select([gap == 0, gap == 1], [2.0, 1.0], 0.0)
        omega[0, k - 1] = omega[k - 1, 0] = 0.9
    else:
        omega = np.ones((k, k)) + np.eye(k)
    if not is_pd(omega):
        raise NotPositiveDefiniteError(f"model {model_id} is not positive definite at k = {k}")
    return omega


def make_design(kind, n, p, seed=None):
    """Design matrix of the given family.

    ``null`` is all zeros, ``random`` has orthonormal columns and
    ``specific`` tiles ``3 I_p`` vertically, truncated to ``n`` rows.
    """
    if kind == "null":
        return np.zeros((n, p))
    if kind == "random":
        if n < p:
            raise ValueError("random design needs n >= p")
        q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, p)))
        return q * np.sign(np.diag(r))
    if kind == "specific":
        reps = -(-n // p)
        return np.tile(3.0 * np.eye(p), (reps, 1))[:n]
    raise ValueError(f"unknown design kind {kind!r}")


@dataclass
class ExperimentConfig:
    """Settings of a KL or Stein's-loss simulation (desk-scale defaults)."""

    model_id: int = 1
    k: int = 5
    p: int = 5
    sample_sizes: tuple = (50, 100, 150, 200, 250, 300, 350, 400)
    replicates: int = 30
    designs: tuple = ("random", "specific")
    priors: tuple = PRESETS
    bias: bool = False
    seed: int = 2024
    mc_count: int = 2000
    prior_scale: float = 1e-3
    workers: int = 1
    antithetic: bool = True

    def __post_init__(self):
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        self.designs = tuple(self.designs)
        self.priors = tuple(self.priors)
        if not self.sample_sizes or any(n <= 0 for n in self.sample_sizes):
            raise ValueError("sample sizes must be positive")
        if any(b <= a for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ValueError("sample sizes must be increasing")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for d in self.designs:
            if d not in ("random", "specific"):
                raise ValueError(f"design must be 'random' or 'specific', got {d!r}")
        for name in self.priors:
            if name not in PRESETS:
                raise ValueError(f"unknown prior preset {name!r}")
        covariance_model(self.model_id, self.k)


class ResultRecord(NamedTuple):
    model_id: int
    prior: str
    lambda_level: str
    design: str
    n: int
    replicate: int
    metric: str
    value: float


def simulation_prior(name, B, omega, scale=1e-3, lambda_scale=None):
    """Named prior centred on the coefficients ``B``.

    The Normal-Wishart prior centres ``B`` at ``B0 Omega``, so ``B0 = B Sigma``
    puts its prior mean at ``B`` for the true ``Omega``.
    """
    k, p = omega.shape[0], B.shape[0]
    B0 = B @ inv_spd(omega) if name.startswith("wishart") else B
    return preset(name, k, p, B0, lambda_scale=lambda_scale, scale=scale)


def map_estimate(prior, data):
    """Posterior point estimate of ``Omega`` used for Stein's loss."""
    if isinstance(prior, NormalWishartPrior):
        return nw_posterior(prior, data).marginal.mode
    if isinstance(prior, NormalMGIGPrior):
        return joint_map_nmgig(prior, data).omega
    raise TypeError("MAP is defined for Normal-Wishart and Normal-MGIG priors")


def _replicate_streams(seed, n, r, antithetic):
    """Seeds for one replicate; antithetic pairs ``(2j, 2j+1)`` share them."""
    base = r // 2 if antithetic else r
    ss = np.random.SeedSequence([seed, n, base])
    noise, design, bias, mc = ss.spawn(4)
    sign = -1.0 if antithetic and r % 2 else 1.0
    return noise, design, bias, int(mc.generate_state(1)[0]), sign


def _replicate_data(cfg, omega, n, r):
    """Shared noise and the per-design responses of one replicate."""
    k, p = cfg.k, cfg.p
    noise_ss, design_ss, bias_ss, mc_seed, sign = _replicate_streams(cfg.seed, n, r, cfg.antithetic)
    sigma = inv_spd(omega)
    z = sign * np.random.default_rng(noise_ss).standard_normal((n, k))
    noise = z @ cholesky(sigma).T
    B = np.eye(p, k)
    arms = {"null": Dataset(np.zeros((n, p)), noise)}
    for d in cfg.designs:
        X = make_design(d, n, p, design_ss)
        arms[d] = Dataset(X, X @ B @ sigma + noise)
    B0 = B + np.random.default_rng(bias_ss).standard_normal((p, k)) if cfg.bias else B
    return arms, B0, mc_seed


def _level(name):
    return name.partition("-")[2]


def _run(cfg, metric, unit):
    omega = covariance_model(cfg.model_id, cfg.k)
    jobs = [(n, r) for n in cfg.sample_sizes for r in range(cfg.replicates)]

    def job(nr):
        n, r = nr
        arms, B0, mc_seed = _replicate_data(cfg, omega, n, r)
        out = []
        for name in cfg.priors:
            prior = simulation_prior(name, B0, omega, scale=cfg.prior_scale)
            base = unit(prior, arms["null"], mc_seed, name)
            for d in cfg.designs:
                val = unit(prior, arms[d], mc_seed, name) - base
                out.append(ResultRecord(cfg.model_id, name, _level(name), d, n, r, metric, float(val)))
        return out

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(job, jobs))
    else:
        parts = [job(j) for j in jobs]
    records = [rec for part in parts for rec in part]
    order = {name: i for i, name in enumerate(cfg.priors)}
    dorder = {d: i for i, d in enumerate(cfg.designs)}
    records.sort(key=lambda t: (t.n, t.replicate, order[t.prior], dorder[t.design]))
    return records


def run_kl_experiment(cfg):
    """Difference of log KL(posterior || prior) between each design and the null design.

    Both arms of a replicate share the response noise and the Monte Carlo
    seed, so the difference isolates the effect of the design.
    """
    omega = covariance_model(cfg.model_id, cfg.k)
    z0 = {}
    for name in cfg.priors:
        if name.startswith("mgig"):
            prior = simulation_prior(name, np.eye(cfg.p, cfg.k), omega, scale=cfg.prior_scale)
            est = log_normalizer_estimate(prior.mgig, 4 * cfg.mc_count, [cfg.seed, 0], proposal="auto")
            z0[name] = (est.value, est.stderr)

    def unit(prior, data, mc_seed, name):
        kl = kl_posterior_prior(prior, data, cfg.mc_count, mc_seed, log_z0=z0.get(name))
        if not kl.value > 0:
            raise FloatingPointError(f"non-positive KL estimate {kl.value:g}; increase mc_count")
        return np.log(kl.value)

    return _run(cfg, "delta_log_kl", unit)


def run_stein_experiment(cfg):
    """Difference of log Stein's loss of the MAP between each design and the null design."""
    omega = covariance_model(cfg.model_id, cfg.k)

    def unit(prior, data, mc_seed, name):
        return np.log(steins_loss(map_estimate(prior, data), omega))

    return _run(cfg, "delta_log_stein", unit)


@dataclass
class ToyConfig:
    """Three responses, one predictor affecting only the third response.

    With ``effect_scale="marginal"`` the observable regression ``E[Y | X]``
    moves only the third response (``B Omega^{-1} = (0, 0, effect)``); with
    ``"conditional"`` the conditional coefficients are ``B = (0, 0, effect)``.
    """

    n: int = 200
    effect: float = 1.0
    draws: int = 2000
    seed: int = 7
    runs: int = 1
    phi_scale: float = 1e-3
    effect_scale: str = "marginal"
    certain_scale: float = 1e-3
    uncertain_scale: float = 1e3


class ToyCell(NamedTuple):
    prior: str
    lambda_level: str
    experiment: bool
    run: int
    rho: np.ndarray
    weights: np.ndarray

    @property
    def sd(self):
        w = self.weights / self.weights.sum()
        m = w @ self.rho
        return float(np.sqrt(w @ (self.rho - m) ** 2))


def posterior_rho_draws(prior, data, i, j, draws, seed):
    """Weighted posterior draws of the partial correlation ``rho_ij``."""
    if isinstance(prior, NormalWishartPrior):
        omegas = sample_nw_posterior(nw_posterior(prior, data), draws, seed)
        weights = np.ones(draws)
    else:
        s = sample_mgig(nmgig_posterior(prior, data).marginal, draws, seed, proposal="auto")
        omegas, weights = s.omegas, s.weights
    return partial_correlation(omegas, i, j), weights


def run_toy(cfg=None):
    """Posterior draws of ``rho_12`` for the eight toy cells of every run.

    Cells cross the two prior families, the two certainty levels and the
    presence of the experiment. Both experiment arms share noise and seeds.
    """
    cfg = cfg or ToyConfig()
    k, p = 3, 1
    omega = covariance_model(1, k)
    sigma = inv_spd(omega)
    cells = []
    for run in range(cfg.runs):
        noise_ss, x_ss, mc_ss = np.random.SeedSequence([cfg.seed, run]).spawn(3)
        X = np.random.default_rng(x_ss).standard_normal((cfg.n, p))
        noise = np.random.default_rng(noise_ss).standard_normal((cfg.n, k)) @ cholesky(sigma).T
        mc_seed = int(mc_ss.generate_state(1)[0])
        for experiment in (False, True):
            B = np.array([[0.0, 0.0, cfg.effect if experiment else 0.0]])
            if cfg.effect_scale == "marginal":
                B = B @ omega
            elif cfg.effect_scale != "conditional":
                raise ValueError("effect_scale must be 'marginal' or 'conditional'")
            data = Dataset(X, X @ B @ sigma + noise)
            for family, lam in (("wishart", 2 * k + 2), ("mgig", k + 1)):
                for level, lscale in (("certain", cfg.certain_scale), ("uncertain", cfg.uncertain_scale)):
                    name = f"{family}-{level}"
                    prior = simulation_prior(name, B, omega, scale=cfg.phi_scale, lambda_scale=lscale)
                    rho, w = posterior_rho_draws(prior, data, 0, 1, cfg.draws, mc_seed)
                    cells.append(ToyCell(family, level, experiment, run, rho, w))
    return cells


def summarize(records):
    """Mean and 2.5% / 97.5% quantiles per (model, prior, design, n, metric)."""
    groups = {}
    for rec in records:
        key = (rec.model_id, rec.prior, rec.lambda_level, rec.design, rec.n, rec.metric)
        groups.setdefault(key, []).append(rec.value)
    rows = []
    for key, vals in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        v = np.asarray(vals)
        rows.append(key + (v.size, float(v.mean()), float(np.quantile(v, 0.025)), float(np.quantile(v, 0.975))))
    return rows


SUMMARY_FIELDS = ("model_id", "prior", "lambda_level", "design", "n", "metric", "count", "mean", "q025", "q975")


def records_to_csv(records, fields=RECORD_FIELDS):
    """Render rows as CSV text with fixed float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for rec in records:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in rec])
    return buf.getvalue()
