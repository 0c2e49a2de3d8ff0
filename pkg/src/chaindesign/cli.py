"""Command-line interface: ``chaindesign <subcommand> [options]``."""

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    ConfigError,
    LAMBDA_SCALES,
    analyze_real,
    bundled_gut_csv,
    ingest_csv,
    read_config,
    real_data_priors,
)
from .laplace import d_optimality_score, info_bound, info_gain, marginal_precision
from .linalg import NotPositiveDefiniteError
from .mgig import DegenerateSamplerError, sample_mgig
from .model import ChainGraphParams, mle
from .priors import FlatPrior, MGIGParams
from .simlab import (
    CONVENTIONS,
    SUMMARY_FIELDS,
    ExperimentConfig,
    ToyConfig,
    covariance_model,
    records_to_csv,
    run_kl_experiment,
    run_stein_experiment,
    run_toy,
    simulation_prior,
    summarize,
)

__all__ = ["main", "build_parser"]

DRAW_FIELDS = ("draw_index", "weight", "value")


def _common(top):
    # subcommands must not overwrite values given before the subcommand name
    kw = {} if top else {"default": argparse.SUPPRESS}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base random seed", **({"default": None} | kw))
    common.add_argument("--threads", type=int, help="maximum worker threads (results do not depend on it)",
                        **({"default": 1} | kw))
    common.add_argument("--out", help="output CSV path (default: stdout)", **({"default": None} | kw))
    return common


def build_parser():
    common = _common(top=False)
    parser = argparse.ArgumentParser(
        prog="chaindesign",
        description="Experimental design for precision-matrix estimation in Gaussian chain graphs.",
        parents=[_common(top=True)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    for name, helptext in (
        ("simulate-kl", "difference of log KL(posterior || prior), design vs null"),
        ("simulate-stein", "difference of log Stein's loss of the MAP, design vs null"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--config", help="INI file with an [experiment] section")
        sp.add_argument("--summary", help="also write mean and 2.5%%/97.5%% quantiles to this CSV")

    sp = sub.add_parser("toy", parents=[common], help="posterior draws of rho_12 in the three-response toy")
    sp.add_argument("--config", help="INI file with a [toy] section")
    sp.add_argument("--runs", type=int)
    sp.add_argument("--draws", type=int)

    sp = sub.add_parser("design-eval", parents=[common], help="score a design matrix against a prior")
    sp.add_argument("--design", required=True, help="CSV of the n x p design matrix")
    sp.add_argument("--prior", choices=("mgig", "wishart", "flat"), default="mgig")
    sp.add_argument("--lambda-scale", type=float, default=1e-3)
    sp.add_argument("--model-id", type=int, default=1, help="true precision model (1-6)")
    sp.add_argument("--k", type=int, default=None, help="number of responses (default: p)")
    sp.add_argument("--omega-file", help="CSV k x k precision matrix, overrides --model-id")
    sp.add_argument("--b0-file", help="CSV p x k prior coefficient matrix (default: I)")

    sp = sub.add_parser("sample-mgig", parents=[common], help="importance draws from an MGIG law")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--psi-file", required=True)
    sp.add_argument("--phi-file", required=True)
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--proposal", choices=("wishart", "laplace", "auto"), default="wishart")
    sp.add_argument("--workers", type=int, default=1, help="sampling partitions (part of the seed contract)")

    sp = sub.add_parser("fit", parents=[common], help="posterior of a partial correlation on abundance data")
    sp.add_argument("--data", default=None, help="abundance CSV (default: bundled synthetic table)")
    sp.add_argument("--pair", required=True, help="two focal taxa, comma separated")
    sp.add_argument("--prior", choices=("mgig", "wishart", "both"), default="both")
    sp.add_argument("--lambda-scale", type=float, action="append", help="repeatable; default 0.1, 1, 10")
    sp.add_argument("--draws", type=int, default=2000)
    sp.add_argument("--sample-column", default="sample_id")
    sp.add_argument("--predictors", help="comma-separated predictor columns")
    sp.add_argument("--categorical", help="comma-separated predictor columns to treat as categorical")
    sp.add_argument("--min-abundance", type=float, default=0.005)
    sp.add_argument("--min-samples", type=int, default=50)
    sp.add_argument("--pseudo-count", type=float, default=0.5)
    sp.add_argument("--no-center", action="store_true", help="do not centre responses and predictors")
    return parser


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sidecar(path, meta):
    if path is not None:
        Path(path).with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _load_matrix(path):
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=","))
    except ValueError:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def _cmd_simulate(args, kl):
    cfg = read_config(args.config, "experiment", ExperimentConfig) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg = replace(cfg, workers=max(1, args.threads))
    records = (run_kl_experiment if kl else run_stein_experiment)(cfg)
    _emit(records_to_csv(records), args.out)
    if args.summary:
        Path(args.summary).write_text(_rows_to_csv(SUMMARY_FIELDS, summarize(records)))
    meta = {k: v for k, v in asdict(cfg).items() if k != "workers"}
    _sidecar(args.out, {"config": meta, "conventions": CONVENTIONS})
    return 0


def _cmd_toy(args):
    cfg = read_config(args.config, "toy", ToyConfig) if args.config else ToyConfig()
    over = {k: v for k, v in (("seed", args.seed), ("runs", args.runs), ("draws", args.draws)) if v is not None}
    cfg = replace(cfg, **over)
    rows = []
    for c in run_toy(cfg):
        for i, (r, w) in enumerate(zip(c.rho, c.weights)):
            rows.append((c.prior, c.lambda_level, int(c.experiment), c.run, i, float(w), float(r)))
    header = ("prior", "lambda_level", "experiment", "run") + DRAW_FIELDS
    _emit(_rows_to_csv(header, rows), args.out)
    _sidecar(args.out, {"config": asdict(cfg)})
    return 0


def _summary_eigs(name, mat):
    w = np.linalg.eigvalsh(mat)
    return [(f"{name}_min_eig", float(w[0])), (f"{name}_max_eig", float(w[-1])), (f"{name}_trace", float(w.sum()))]


def _cmd_design_eval(args):
    X = _load_matrix(args.design)
    n, p = X.shape
    if args.omega_file:
        omega = _load_matrix(args.omega_file)
    else:
        omega = covariance_model(args.model_id, args.k or p)
    k = omega.shape[0]
    B0 = _load_matrix(args.b0_file) if args.b0_file else np.eye(p, k)
    params = ChainGraphParams(B0, omega)
    Lambda = args.lambda_scale * np.eye(p)
    rows = []
    if args.prior == "flat":
        prior = FlatPrior()
    else:
        prior = simulation_prior(f"{args.prior}-certain", B0, omega, lambda_scale=args.lambda_scale)
    mp = marginal_precision(prior, params, X, n)
    rows.append(("depends_on_design", int(mp.depends_on_design)))
    rows.append(("d_optimality", d_optimality_score(X, Lambda)))
    rows += _summary_eigs("marginal_precision", mp.matrix)
    if args.prior == "mgig":
        gain, bound = info_gain(prior, omega, X), info_bound(prior, params)
        rows += _summary_eigs("gain", gain) + _summary_eigs("bound", bound)
        rows += _summary_eigs("bound_minus_gain", bound - gain)
    _emit(_rows_to_csv(("quantity", "value"), rows), args.out)
    return 0


def _cmd_sample_mgig(args):
    params = MGIGParams(args.lam, _load_matrix(args.psi_file), _load_matrix(args.phi_file))
    seed = 0 if args.seed is None else args.seed
    s = sample_mgig(params, args.count, seed, workers=args.workers, proposal=args.proposal)
    rows_i, cols_i = np.triu_indices(params.k)
    w = s.weights
    rows = []
    for d in range(s.count):
        for r, c in zip(rows_i, cols_i):
            rows.append((d, float(w[d]), r, c, float(s.omegas[d, r, c])))
    _emit(_rows_to_csv(("draw_index", "weight", "row", "col", "value"), rows), args.out)
    _sidecar(args.out, {"proposal": s.proposal, "ess": s.ess, "count": s.count, "workers": args.workers})
    return 0


def _split(s):
    return [x.strip() for x in s.split(",") if x.strip()] if s else None


def _cmd_fit(args):
    path = args.data or bundled_gut_csv()
    ing = ingest_csv(
        path,
        predictors=_split(args.predictors),
        sample_column=args.sample_column,
        categorical=_split(args.categorical),
        min_relative_abundance=args.min_abundance,
        min_samples=args.min_samples,
        pseudo_count=args.pseudo_count,
        center=not args.no_center,
    )
    pair = _split(args.pair)
    if len(pair) != 2:
        raise ValueError("--pair needs exactly two taxa")
    missing = [t for t in pair if t not in ing.focal]
    if missing:
        raise ValueError(f"not focal taxa: {', '.join(missing)} (focal: {', '.join(ing.focal)})")
    idx = (ing.focal.index(pair[0]), ing.focal.index(pair[1]))
    fit = mle(ing.dataset)
    families = ("mgig", "wishart") if args.prior == "both" else (args.prior,)
    scales = tuple(args.lambda_scale) if args.lambda_scale else LAMBDA_SCALES
    priors = real_data_priors(fit, families, scales)
    seed = 0 if args.seed is None else args.seed
    rows = []
    for res in analyze_real(ing.dataset, priors, idx, args.draws, seed):
        for i, (r, w) in enumerate(zip(res.rho, res.weights)):
            rows.append((res.prior, res.lambda_scale, res.arm, i, float(w), float(r)))
    header = ("prior", "lambda_scale", "arm") + DRAW_FIELDS
    _emit(_rows_to_csv(header, rows), args.out)
    _sidecar(args.out, {
        "data": str(path), "pair": pair, "k": ing.dataset.k, "p": ing.dataset.p, "n": ing.dataset.n,
        "focal": list(ing.focal), "reference": list(ing.reference), "predictors": list(ing.predictors),
    })
    return 0


COMMANDS = {
    "simulate-kl": lambda a: _cmd_simulate(a, True),
    "simulate-stein": lambda a: _cmd_simulate(a, False),
    "toy": _cmd_toy,
    "design-eval": _cmd_design_eval,
    "sample-mgig": _cmd_sample_mgig,
    "fit": _cmd_fit,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError, IndexError, NotPositiveDefiniteError,
            DegenerateSamplerError, np.linalg.LinAlgError) as exc:
        print(f"chaindesign {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
