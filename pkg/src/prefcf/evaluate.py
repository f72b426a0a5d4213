"""MAE evaluation: the given-N protocol runner and TSV report emission."""

from __future__ import annotations

import itertools
import logging
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import classic, decoupled, memory, ordering
from .config import MODEL_KINDS, RunConfig
from .data import FIRST_IN_FILE, SplitProtocol, split
from .errors import FoldInError, PrefcfError, ValidationError

log = logging.getLogger(__name__)

# Previously reported MAE for the original MovieRating / EachMovie benchmark
# configurations, keyed by (dataset, model, train users, given count). Shown
# in reports as context only; the original datasets are no longer available,
# so these numbers are never asserted against computed results.
REFERENCE_MAE = {}


def _fill_reference():
    movierating = {
        ("dm", 100): (0.814, 0.810, 0.799), ("mp", 100): (0.911, 0.905, 0.880),
        ("baseline", 100): (0.823, 0.822, 0.817),
        ("pcc", 100): (0.881, 0.832, 0.809), ("vs", 100): (0.859, 0.834, 0.823),
        ("pd", 100): (0.839, 0.826, 0.818), ("am", 100): (0.882, 0.856, 0.836),
        ("bc", 100): (0.968, 0.946, 0.941),
        ("dm", 200): (0.790, 0.777, 0.761), ("mp", 200): (0.877, 0.861, 0.837),
        ("baseline", 200): (0.804, 0.801, 0.799),
        ("pcc", 200): (0.878, 0.828, 0.801), ("vs", 200): (0.862, 0.950, 0.854),
        ("pd", 200): (0.835, 0.816, 0.806), ("am", 200): (0.891, 0.850, 0.818),
        ("bc", 200): (0.949, 0.942, 0.912),
    }
    eachmovie = {
        ("dm", 200): (1.07, 1.04, 1.03), ("mp", 200): (1.12, 1.09, 1.09),
        ("baseline", 200): (1.08, 1.06, 1.05),
        ("pcc", 200): (1.22, 1.16, 1.13), ("vs", 200): (1.25, 1.24, 1.26),
        ("pd", 200): (1.19, 1.16, 1.15), ("am", 200): (1.27, 1.18, 1.14),
        ("bc", 200): (1.25, 1.22, 1.17),
        ("dm", 400): (1.05, 1.03, 1.02), ("mp", 400): (1.10, 1.08, 1.07),
        ("baseline", 400): (1.06, 1.05, 1.04),
        ("pcc", 400): (1.22, 1.16, 1.13), ("vs", 400): (1.32, 1.33, 1.37),
        ("pd", 400): (1.18, 1.16, 1.15), ("am", 400): (1.28, 1.19, 1.16),
        ("bc", 400): (1.17, 1.15, 1.14),
    }
    for dataset, table in (("movierating", movierating), ("eachmovie", eachmovie)):
        for (model, train_users), values in table.items():
            for given, value in zip((5, 10, 20), values):
                REFERENCE_MAE[(dataset, model, train_users, given)] = value


_fill_reference()


@dataclass
class PredictionRecord:
    user: int
    item: int
    predicted: float
    actual: int
    abstained: bool = False


@dataclass
class EvalRow:
    model: str
    train_users: int
    given: int
    mae: float
    n_pred: int
    n_abstain: int
    seconds: float
    failed: bool = False


@dataclass
class EvalReport:
    dataset: str = ""
    rows: list = field(default_factory=list)


def mae(records):
    """Mean absolute deviation of predicted from actual ratings.

    Abstained records must already carry their fallback prediction.
    """
    if not records:
        raise ValidationError("MAE is undefined on zero prediction records")
    return float(np.mean([abs(r.predicted - r.actual) for r in records]))


def _observed_pairs(items, ratings):
    pairs = []
    for i, j in itertools.combinations(range(len(items)), 2):
        pairs.append(ordering.RatedPair(
            user=0, item_a=int(items[i]), item_b=int(items[j]),
            order=ordering.rating_order(int(ratings[i]), int(ratings[j]))))
    return pairs


def _build_predictor(name, train_table, cfg, seed):
    """Train (if needed) and return fn(obs_items, obs_ratings, targets) -> predictions.

    Predictions are floats, or None where the method abstains.
    """
    schedule = cfg.schedule()
    criterion = cfg.criterion()
    scale = train_table.scale
    cap = cfg.pair_cap or None

    if name == "dm":
        params, _ = decoupled.train(
            train_table, cfg.k_x, cfg.k_p, cfg.k_r, cfg.k_pref,
            schedule=schedule, criterion=criterion, seed=seed)

        def predict(items, ratings, targets):
            profile = decoupled.fold_in(params, items, ratings, cfg.alpha, criterion)
            return [decoupled.predict_rating(params, profile, t, cfg.mode) for t in targets]

    elif name == "baseline":
        params, _ = decoupled.train_baseline(
            train_table, cfg.k_x, cfg.k_p, schedule=schedule, criterion=criterion, seed=seed)

        def predict(items, ratings, targets):
            weights = decoupled.baseline_fold_in(params, items, ratings, cfg.alpha, criterion)
            return [decoupled.baseline_predict_rating(params, weights, t, cfg.mode)
                    for t in targets]

    elif name == "mp":
        params, _ = ordering.train(
            train_table, cfg.k_y, cfg.k_x, max_pairs_per_user=cap,
            schedule=schedule, criterion=criterion, seed=seed)

        def predict(items, ratings, targets):
            try:
                profile = ordering.fold_in(params, _observed_pairs(items, ratings), criterion)
            except FoldInError:
                return [None] * len(targets)
            return [ordering.predict_rating(params, profile, items, ratings, t, scale)
                    for t in targets]

    elif name == "am":
        params, _ = classic.train_aspect(
            train_table, cfg.k_classes, schedule=schedule, criterion=criterion, seed=seed)

        def predict(items, ratings, targets):
            weights = classic.aspect_fold_in(params, items, ratings, cfg.alpha, criterion)
            return [classic.aspect_predict(params, weights, t, cfg.mode) for t in targets]

    elif name == "bc":
        params, _ = classic.train_clusters(
            train_table, cfg.k_classes, schedule=schedule, criterion=criterion, seed=seed)

        def predict(items, ratings, targets):
            posterior = classic.cluster_posterior(params, items, ratings)
            out = []
            for t in targets:
                dist = posterior @ params.rating_given_class_item[:, t, :]
                if cfg.mode == "expected":
                    out.append(float(np.arange(1, scale + 1) @ dist))
                else:
                    out.append(float(np.argmax(dist) + 1))
            return out

    elif name == "pd":
        def predict(items, ratings, targets):
            weights = classic.pd_weights(train_table, items, ratings, cfg.sigma)
            candidates = np.arange(1, scale + 1)
            out = []
            for t in targets:
                raters, rater_ratings = train_table.item_raters(t)
                if len(raters) == 0:
                    out.append(None)
                    continue
                kernel = np.exp(-np.square(rater_ratings[:, None] - candidates[None, :])
                                / (2.0 * cfg.sigma ** 2))
                out.append(float(np.argmax(weights[raters] @ kernel) + 1))
            return out

    elif name in ("pcc", "vs"):
        method = memory.PEARSON if name == "pcc" else memory.COSINE
        user_means = np.array([train_table.user_mean(u) if len(train_table.user_triple_indices(u))
                               else 0.0 for u in range(train_table.num_users)])

        def predict(items, ratings, targets):
            weights = memory.similarity_weights(train_table, items, ratings, method)
            obs_mean = float(np.asarray(ratings, dtype=float).mean())
            out = []
            for t in targets:
                raters, rater_ratings = train_table.item_raters(t)
                w = weights[raters]
                nz = w != 0.0
                if not nz.any():
                    out.append(None)
                    continue
                offsets = rater_ratings[nz] - user_means[raters[nz]]
                value = obs_mean + float((w[nz] * offsets).sum() / np.abs(w[nz]).sum())
                out.append(float(np.clip(value, 1.0, scale)))
            return out

    else:
        raise ValidationError(f"unknown model kind {name!r}")
    return predict


def run_protocol(table, models, train_sizes, given_counts, config=None, seed=0,
                 dataset="", given_selection=FIRST_IN_FILE):
    """Evaluate every model over the (train size, given count) grid.

    For each cell: split the table, train the model on the training users,
    fold in every test user on their given ratings, predict every heldout
    rating, and record the MAE. Abstentions fall back to the user's mean
    given rating (clamped to the scale). A model failure marks its cell
    failed and the run continues. Deterministic for a fixed seed.
    """
    cfg = (config or RunConfig()).validate()
    for name in models:
        if name not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {name!r}")
    report = EvalReport(dataset=dataset)
    for train_size in train_sizes:
        for given in given_counts:
            protocol = SplitProtocol(train_size, given, given_selection, seed)
            result = split(table, protocol)
            test_users = np.unique(result.test_observed.users)
            for name in models:
                started = time.perf_counter()
                try:
                    row = _run_cell(name, result, test_users, cfg, seed)
                except PrefcfError as exc:
                    log.warning("cell (%s, train=%d, given=%d) failed: %s",
                                name, train_size, given, exc)
                    row = EvalRow(name, train_size, given, float("nan"), 0, 0, 0.0,
                                  failed=True)
                row.train_users = train_size
                row.given = given
                row.seconds = time.perf_counter() - started
                report.rows.append(row)
                log.info("model=%s train_users=%d given=%d mae=%s n_pred=%d",
                         name, train_size, given,
                         "failed" if row.failed else f"{row.mae:.4f}", row.n_pred)
    return report


def _run_cell(name, split_result, test_users, cfg, seed):
    predict = _build_predictor(name, split_result.train, cfg, seed)
    records = []
    n_abstain = 0
    for user in test_users:
        items = split_result.test_observed.user_items(user)
        ratings = split_result.test_observed.user_ratings(user)
        targets = split_result.test_heldout.user_items(user)
        actuals = split_result.test_heldout.user_ratings(user)
        fallback = float(np.clip(ratings.mean(), 1.0, split_result.train.scale))
        predictions = predict(items, ratings, targets)
        for target, actual, value in zip(targets, actuals, predictions):
            abstained = value is None
            if abstained:
                n_abstain += 1
                value = fallback
            records.append(PredictionRecord(int(user), int(target), float(value),
                                            int(actual), abstained))
    return EvalRow(name, 0, 0, mae(records), len(records), n_abstain, 0.0)


def render_report(report, destination=None, timing=False):
    """Write a report as TSV; the reference column appears for known datasets.

    Measured seconds are volatile, so they are rendered only when ``timing``
    is requested; otherwise the column holds '-' and output is reproducible.
    """
    dataset = report.dataset.lower()
    with_reference = any(key[0] == dataset for key in REFERENCE_MAE)
    header = ["model", "train_users", "given", "mae", "n_pred", "n_abstain", "seconds"]
    if with_reference:
        header.append("reference")
    lines = ["\t".join(header)]
    for row in report.rows:
        cells = [
            row.model, str(row.train_users), str(row.given),
            "nan" if row.failed or not np.isfinite(row.mae) else f"{row.mae:.4f}",
            str(row.n_pred), str(row.n_abstain),
            f"{row.seconds:.3f}" if timing else "-",
        ]
        if with_reference:
            ref = REFERENCE_MAE.get((dataset, row.model, row.train_users, row.given))
            cells.append("-" if ref is None else f"{ref:.3f}")
        lines.append("\t".join(cells))
    text = "\n".join(lines) + "\n"
    if destination is None:
        sys.stdout.write(text)
    elif hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
