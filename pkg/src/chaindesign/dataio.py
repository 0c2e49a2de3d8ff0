"""Abundance-table ingestion, the real-data pipeline and config parsing."""

import configparser
import csv
from dataclasses import dataclass, fields
from importlib import resources
from typing import NamedTuple

import numpy as np

from .linalg import inv_spd
from .estimators import partial_correlation
from .mgig import sample_mgig, sample_nw_posterior
from .model import ChainGraphParams, Dataset, mle, sample_responses
from .priors import NormalMGIGPrior, NormalWishartPrior, nmgig_posterior, nw_posterior

__all__ = [
    "Ingested",
    "ingest_csv",
    "bundled_gut_csv",
    "make_synthetic_gut",
    "real_data_priors",
    "RhoDraws",
    "analyze_real",
    "ConfigError",
    "read_config",
]


# ---------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class Ingested:
    dataset: Dataset
    sample_ids: tuple
    focal: tuple
    reference: tuple
    predictors: tuple


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {line_no}: expected {len(header)} fields, found {len(row)}"
                )
            rows.append((line_no, [c.strip() for c in row]))
    return header, rows


def _is_count(value):
    try:
        f = float(value)
    except ValueError:
        return False
    return f >= 0 and f == int(f) and "." not in value


def _to_float(path, line_no, col, value):
    try:
        out = float(value)
    except ValueError:
        raise ValueError(f"{path}: line {line_no}: column {col!r}: not a number: {value!r}") from None
    if not np.isfinite(out):
        raise ValueError(f"{path}: line {line_no}: column {col!r}: missing or non-finite value")
    return out


def ingest_csv(
    path,
    taxa=None,
    predictors=None,
    sample_column="sample_id",
    categorical=None,
    min_relative_abundance=0.005,
    min_samples=50,
    pseudo_count=0.5,
    center=True,
):
    """Read an abundance table and build a chain-graph dataset.

    A taxon is focal when its relative abundance exceeds
    ``min_relative_abundance`` in more than ``min_samples`` samples; the rest
    form the reference group. Responses are log-ratios of each focal taxon
    against the pooled reference, with ``pseudo_count`` added to zero cells.
    Categorical predictors become indicator columns with the first (sorted)
    level dropped.

    Without explicit lists, columns whose entries are all nonnegative
    integers are taxa and the remaining non-id columns are predictors.
    With ``center`` the response and predictor columns are centred, since
    the model has no intercept.
    """
    header, rows = _read_rows(path)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = {h: i for i, h in enumerate(header)}
    if sample_column not in cols:
        raise ValueError(f"{path}: missing sample id column {sample_column!r}")
    others = [h for h in header if h != sample_column]
    if taxa is None and predictors is None:
        taxa = [h for h in others if all(_is_count(r[cols[h]]) for _, r in rows)]
        predictors = [h for h in others if h not in taxa]
    elif taxa is None:
        taxa = [h for h in others if h not in predictors]
    elif predictors is None:
        predictors = [h for h in others if h not in taxa]
    for h in list(taxa) + list(predictors):
        if h not in cols:
            raise ValueError(f"{path}: missing column {h!r}")
    counts = np.array([[_to_float(path, ln, h, r[cols[h]]) for h in taxa] for ln, r in rows])
    bad = np.argwhere(counts < 0)
    if bad.size:
        ln = rows[bad[0][0]][0]
        raise ValueError(f"{path}: line {ln}: negative abundance")
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        ln = rows[int(np.flatnonzero(totals[:, 0] <= 0)[0])][0]
        raise ValueError(f"{path}: line {ln}: sample has zero total abundance")
    rel = counts / totals
    hits = (rel > min_relative_abundance).sum(axis=0)
    focal_mask = hits > min_samples
    if not focal_mask.any():
        raise ValueError("no taxon passes the focal selection rule")
    if focal_mask.all():
        raise ValueError("every taxon is focal; the reference group would be empty")
    focal = tuple(t for t, f in zip(taxa, focal_mask) if f)
    reference = tuple(t for t, f in zip(taxa, focal_mask) if not f)

    def pc(a):
        return np.where(a == 0, pseudo_count, a)

    ref = pc(counts[:, ~focal_mask].sum(axis=1, keepdims=True))
    Y = np.log(pc(counts[:, focal_mask]) / ref)

    categorical = set(categorical or ())
    xcols, names = [], []
    for h in predictors:
        values = [r[cols[h]] for _, r in rows]
        numeric = h not in categorical and all(_maybe_float(v) is not None for v in values)
        if numeric:
            xcols.append([_to_float(path, ln, h, r[cols[h]]) for ln, r in rows])
            names.append(h)
            continue
        if any(v == "" for v in values):
            ln = rows[values.index("")][0]
            raise ValueError(f"{path}: line {ln}: column {h!r}: missing value")
        for level in sorted(set(values))[1:]:
            xcols.append([1.0 if v == level else 0.0 for v in values])
            names.append(f"{h}={level}")
    X = np.array(xcols, dtype=float).T if xcols else np.zeros((len(rows), 0))
    if center:
        Y = Y - Y.mean(axis=0)
        X = X - X.mean(axis=0) if X.size else X
    ids = tuple(r[cols[sample_column]] for _, r in rows)
    return Ingested(Dataset(X, Y), ids, focal, reference, tuple(names))


def _maybe_float(v):
    try:
        return float(v)
    except ValueError:
        return None


def bundled_gut_csv():
    """Path to the synthetic gut-microbiome table shipped with the package."""
    return str(resources.files("chaindesign") / "data" / "synthetic_gut.csv")


FOCAL_GENERA = (
    "Bacteroides", "Clostridium", "Prevotella", "Faecalibacterium", "Ruminococcus",
    "Eubacterium", "Alistipes", "Bifidobacterium", "Roseburia", "Parabacteroides",
)
RARE_GENERA = (
    "Akkermansia", "Collinsella", "Dorea", "Blautia", "Coprococcus", "Lactobacillus",
    "Streptococcus", "Veillonella", "Sutterella", "Oscillibacter", "Desulfovibrio", "Anaerotruncus",
)
RESIDENCE = ("community", "day-hospital", "rehabilitation", "long-stay")
DIET = ("diet1", "diet2", "diet3", "diet4", "diet5")


def make_synthetic_gut(n=178, seed=20120801):
    """Simulate a gut-microbiome-like abundance table (header and rows).

    Log-ratios of ten focal genera against a rare reference group follow a
    chain graph model driven by residence type, diet and age.
    """
    rng = np.random.default_rng(seed)
    k = len(FOCAL_GENERA)
    residence = rng.choice(len(RESIDENCE), size=n, p=[0.35, 0.15, 0.15, 0.35])
    diet = np.minimum(residence + rng.integers(0, 3, size=n), len(DIET) - 1)
    age = np.round(rng.normal(78, 8, size=n), 1)
    X = np.column_stack(
        [(residence == j).astype(float) for j in range(1, len(RESIDENCE))]
        + [(diet == j).astype(float) for j in range(1, len(DIET))]
        + [(age - 78) / 8]
    )
    p = X.shape[1]
    omega = np.eye(k) * 2.0
    for i in range(k - 1):
        omega[i, i + 1] = omega[i + 1, i] = 0.6
    omega[0, 1] = omega[1, 0] = -0.8
    B = rng.normal(0, 1.2, size=(p, k))
    Y = sample_responses(X, ChainGraphParams(B, omega), rng.integers(2**32))
    base = np.array([3.2, 1.4, 2.0, 2.4, 1.6, 1.2, 1.0, 0.8, 1.1, 0.7])
    logits = np.column_stack([Y + base, np.zeros(n)])
    share = np.exp(logits - logits.max(axis=1, keepdims=True))
    share /= share.sum(axis=1, keepdims=True)
    depth = rng.integers(20000, 60000, size=n)
    rare_share = rng.dirichlet(np.ones(len(RARE_GENERA)), size=n)
    counts = np.column_stack(
        [rng.binomial(depth, np.clip(share[:, j], 0, 1)) for j in range(k)]
    )
    ref_total = depth - counts.sum(axis=1)
    rare = np.array([rng.multinomial(max(t, 0), q) for t, q in zip(ref_total, rare_share)])
    header = ["sample_id", "residence", "diet", "age", *FOCAL_GENERA, *RARE_GENERA]
    rows = []
    for i in range(n):
        rows.append(
            [f"S{i + 1:03d}", RESIDENCE[residence[i]], DIET[diet[i]], f"{age[i]:.1f}"]
            + [str(int(c)) for c in counts[i]]
            + [str(int(c)) for c in rare[i]]
        )
    return header, rows


# ---------------------------------------------------------------------------
# real-data pipeline

LAMBDA_SCALES = (0.1, 1.0, 10.0)


def real_data_priors(params, families=("mgig", "wishart"), lambda_scales=LAMBDA_SCALES, scale=0.01):
    """Priors centred on the maximum likelihood fit.

    ``Psi = Phi = scale I_k``; ``lam`` is ``k + 1`` (MGIG) or ``2k + 2``
    (Wishart). The Wishart prior is centred on the fitted marginal coefficients.
    """
    k, p = params.k, params.p
    out = []
    for family in families:
        for ls in lambda_scales:
            Lambda = ls * np.eye(p)
            if family == "mgig":
                prior = NormalMGIGPrior(k + 1, scale * np.eye(k), scale * np.eye(k), params.B, Lambda)
            elif family == "wishart":
                prior = NormalWishartPrior(2 * k + 2, scale * np.eye(k), params.B @ inv_spd(params.omega), Lambda)
            else:
                raise ValueError(f"unknown prior family {family!r}")
            out.append((family, float(ls), prior))
    return out


class RhoDraws(NamedTuple):
    prior: str
    lambda_scale: float
    arm: str
    rho: np.ndarray
    weights: np.ndarray
    ess: float


def analyze_real(data, priors, pair, draws, seed):
    """Posterior draws of ``rho_ij`` on the observed design and on a null twin.

    The null twin is simulated from the maximum likelihood fit with ``X = 0``.
    ``priors`` is a list of ``(family, lambda_scale, prior)`` triples.
    """
    i, j = pair
    k = data.k
    if not (0 <= i < k and 0 <= j < k) or i == j:
        raise IndexError(f"pair ({i}, {j}) invalid for k = {k}")
    fit = mle(data)
    sim_ss, mc_ss = np.random.SeedSequence(seed).spawn(2)
    null = Dataset(np.zeros_like(data.X), sample_responses(np.zeros_like(data.X), fit, sim_ss))
    mc_seed = int(mc_ss.generate_state(1)[0])
    out = []
    for family, ls, prior in priors:
        for arm, d in (("design", data), ("null", null)):
            if isinstance(prior, NormalWishartPrior):
                omegas = sample_nw_posterior(nw_posterior(prior, d), draws, mc_seed)
                w, e = np.ones(draws), float(draws)
            else:
                s = sample_mgig(nmgig_posterior(prior, d).marginal, draws, mc_seed, proposal="auto")
                omegas, w, e = s.omegas, s.weights, s.ess
            out.append(RhoDraws(family, ls, arm, partial_correlation(omegas, i, j), w, e))
    return out


# ---------------------------------------------------------------------------
# configuration


class ConfigError(ValueError):
    pass


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.replace(",", " ").split() if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from None


def read_config(path, section, cls):
    """Build dataclass ``cls`` from ``[section]`` of an INI file.

    Every key must name a field of ``cls``; unknown keys and sections are errors.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    unknown_sections = [s for s in parser.sections() if s != section]
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown_sections)}")
    defaults = cls()
    names = {f.name for f in fields(cls)}
    kwargs = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in names:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            kwargs[key] = _convert(key, raw, getattr(defaults, key))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
