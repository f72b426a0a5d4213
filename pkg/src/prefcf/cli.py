"""Command-line entry point: convert, train, predict, evaluate, synth."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import classic, decoupled, ordering
from .config import MODEL_KINDS, parse_config
from .data import load_dataset, write_canonical
from .errors import ParseError, PrefcfError
from .evaluate import render_report, run_protocol
from .persist import load_model, save_model

log = logging.getLogger(__name__)

_CONFIG_FLAGS = (
    "k_x", "k_p", "k_r", "k_pref", "k_classes", "k_y", "sigma", "alpha",
    "anneal", "beta_start", "beta_growth", "inner_iters", "max_iters",
    "rel_tol", "seed", "mode", "pair_cap",
)


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    for name in _CONFIG_FLAGS:
        parser.add_argument("--" + name.replace("_", "-"), dest=name, default=None)


def _config_from_args(args):
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS
                 if getattr(args, name, None) is not None}
    if getattr(args, "model", None) is not None:
        overrides["model"] = args.model
    return parse_config(getattr(args, "config", None), overrides)


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prefcf",
        description="Latent-class collaborative filtering workbench")
    parser.add_argument("--verbose", action="store_true", help="per-iteration logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a rating file to canonical TSV")
    p.add_argument("--format", required=True, choices=["canonical-tsv", "movielens-100k"])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=None)

    p = sub.add_parser("train", help="train a model and persist it")
    p.add_argument("--model", choices=["dm", "baseline", "mp", "am", "bc"], default="dm")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=None)
    _add_config_flags(p)

    p = sub.add_parser("predict", help="fold in one user and predict item ratings")
    p.add_argument("--model", dest="model_file", required=True, help="persisted model file")
    p.add_argument("--observed", required=True, help="item<TAB>rating file for the user")
    p.add_argument("--items", required=True, help="comma-separated item ids")
    p.add_argument("--scale", type=int, default=None,
                   help="rating scale (required for mp models, which store none)")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="run the MAE protocol grid")
    p.add_argument("--data", required=True)
    p.add_argument("--models", default="dm", help="comma-separated model kinds")
    p.add_argument("--train-users", default="100", help="comma-separated train sizes")
    p.add_argument("--given", default="5,10,20", help="comma-separated given counts")
    p.add_argument("--dataset-name", default="", help="dataset label for reference values")
    p.add_argument("--output", default=None, help="report path (default: stdout)")
    p.add_argument("--timing", action="store_true", help="include measured seconds")
    p.add_argument("--given-selection", default="first-in-file",
                   choices=["first-in-file", "seeded-random"])
    p.add_argument("--scale", type=int, default=None)
    _add_config_flags(p)

    p = sub.add_parser("synth", help="sample a synthetic rating table")
    p.add_argument("--output", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=50)
    p.add_argument("--scale", type=int, default=5)
    p.add_argument("--ratings-per-user", type=int, default=20)
    _add_config_flags(p)
    return parser


def _cmd_convert(args):
    table = load_dataset(args.input, args.format, scale=args.scale)
    write_canonical(table, args.output)
    log.info("wrote %d triples to %s", len(table), args.output)
    return 0


def _cmd_train(args):
    cfg = _config_from_args(args)
    table = load_dataset(args.data, scale=args.scale)
    schedule, criterion = cfg.schedule(), cfg.criterion()
    if cfg.model == "dm":
        params, trace = decoupled.train(table, cfg.k_x, cfg.k_p, cfg.k_r, cfg.k_pref,
                                        schedule=schedule, criterion=criterion, seed=cfg.seed)
    elif cfg.model == "baseline":
        params, trace = decoupled.train_baseline(table, cfg.k_x, cfg.k_p,
                                                 schedule=schedule, criterion=criterion,
                                                 seed=cfg.seed)
    elif cfg.model == "mp":
        params, trace = ordering.train(table, cfg.k_y, cfg.k_x,
                                       max_pairs_per_user=cfg.pair_cap or None,
                                       schedule=schedule, criterion=criterion, seed=cfg.seed)
    elif cfg.model == "am":
        params, trace = classic.train_aspect(table, cfg.k_classes, schedule=schedule,
                                             criterion=criterion, seed=cfg.seed)
    elif cfg.model == "bc":
        params, trace = classic.train_clusters(table, cfg.k_classes, schedule=schedule,
                                               criterion=criterion, seed=cfg.seed)
    else:
        raise ParseError(f"model kind {cfg.model!r} is not trainable")
    save_model(params, args.output)
    log.info("trained %s in %d iterations (converged=%s), saved to %s",
             cfg.model, trace.n_iters, trace.converged, args.output)
    return 0


def _read_observed(path):
    items, ratings = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected item<TAB>rating")
            try:
                items.append(int(parts[0]))
                ratings.append(int(parts[1]))
            except ValueError:
                raise ParseError(f"line {lineno}: item and rating must be integers") from None
    return np.array(items), np.array(ratings)


def _cmd_predict(args):
    cfg = _config_from_args(args)
    params = load_model(args.model_file)
    items, ratings = _read_observed(args.observed)
    targets = _int_list(args.items)
    criterion = cfg.criterion()

    if isinstance(params, decoupled.DecoupledParams):
        profile = decoupled.fold_in(params, items, ratings, cfg.alpha, criterion)
        predictions = [decoupled.predict_rating(params, profile, t, cfg.mode)
                       for t in targets]
    elif isinstance(params, decoupled.BaselineParams):
        weights = decoupled.baseline_fold_in(params, items, ratings, cfg.alpha, criterion)
        predictions = [decoupled.baseline_predict_rating(params, weights, t, cfg.mode)
                       for t in targets]
    elif isinstance(params, ordering.OrderingParams):
        if args.scale is None:
            raise ParseError("the ordering model carries no rating scale; pass --scale")
        scale = args.scale
        pairs = [ordering.RatedPair(0, int(items[i]), int(items[j]),
                                    ordering.rating_order(int(ratings[i]), int(ratings[j])))
                 for i in range(len(items)) for j in range(i + 1, len(items))]
        profile = ordering.fold_in(params, pairs, criterion)
        predictions = [ordering.predict_rating(params, profile, items, ratings, t, scale)
                       for t in targets]
    elif isinstance(params, classic.AspectParams):
        weights = classic.aspect_fold_in(params, items, ratings, cfg.alpha, criterion)
        predictions = [classic.aspect_predict(params, weights, t, cfg.mode) for t in targets]
    elif isinstance(params, classic.ClusterParams):
        predictions = [classic.cluster_predict(params, items, ratings, t, cfg.mode)
                       for t in targets]
    else:
        raise ParseError("unsupported model file")

    for target, value in zip(targets, predictions):
        if isinstance(value, float):
            print(f"{target}\t{value:.4f}")
        else:
            print(f"{target}\t{value}")
    return 0


def _cmd_evaluate(args):
    cfg = _config_from_args(args)
    table = load_dataset(args.data, scale=args.scale)
    models = [m for m in args.models.split(",") if m]
    for name in models:
        if name not in MODEL_KINDS:
            raise ParseError(f"unknown model kind {name!r}")
    report = run_protocol(
        table, models, _int_list(args.train_users), _int_list(args.given),
        config=cfg, seed=cfg.seed, dataset=args.dataset_name,
        given_selection=args.given_selection)
    render_report(report, args.output, timing=args.timing)
    return 0


def _cmd_synth(args):
    cfg = _config_from_args(args)
    rng = np.random.default_rng(cfg.seed)
    params = decoupled.DecoupledParams.random(
        rng, args.users, args.items, args.scale,
        n_item_classes=cfg.k_x, n_pref_classes=cfg.k_p,
        n_rating_classes=cfg.k_r, n_pref_levels=cfg.k_pref)
    table = decoupled.synthesize(params, args.users, args.ratings_per_user, seed=cfg.seed)
    write_canonical(table, args.output)
    log.info("wrote %d synthetic triples to %s", len(table), args.output)
    return 0


_COMMANDS = {
    "convert": _cmd_convert,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def dispatch(argv):
    """Parse and run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except PrefcfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
