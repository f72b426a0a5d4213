"""Memory-based comparators: Pearson-correlation and vector-similarity predictors."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

PEARSON = "pearson"
COSINE = "cosine"


def pearson_weight(obs_items, obs_ratings, train_items, train_ratings):
    """Pearson correlation over co-rated items, with means over those items.

    Fewer than two co-rated items, or zero variance on either side, gives a
    neutral weight of 0.
    """
    a, b = _corated(obs_items, obs_ratings, train_items, train_ratings)
    if len(a) < 2:
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.square(da).sum() * np.square(db).sum())
    if denom == 0.0:
        return 0.0
    return float((da * db).sum() / denom)


def cosine_weight(obs_items, obs_ratings, train_items, train_ratings):
    """Cosine of the two rating vectors: dot over co-rated items, full-profile norms."""
    a, b = _corated(obs_items, obs_ratings, train_items, train_ratings)
    if len(a) == 0:
        return 0.0
    denom = np.linalg.norm(np.asarray(obs_ratings, dtype=float)) * np.linalg.norm(
        np.asarray(train_ratings, dtype=float))
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def _corated(obs_items, obs_ratings, train_items, train_ratings):
    obs_items = np.asarray(obs_items, dtype=np.int64)
    train_items = np.asarray(train_items, dtype=np.int64)
    common, ia, ib = np.intersect1d(obs_items, train_items, return_indices=True)
    del common
    a = np.asarray(obs_ratings, dtype=float)[ia]
    b = np.asarray(train_ratings, dtype=float)[ib]
    return a, b


def similarity_weights(train, obs_items, obs_ratings, method):
    """Weight of every training user against one test user's observed ratings."""
    if method == PEARSON:
        weigh = pearson_weight
    elif method == COSINE:
        weigh = cosine_weight
    else:
        raise ValidationError(f"unknown similarity method {method!r}")
    weights = np.empty(train.num_users)
    for user in range(train.num_users):
        weights[user] = weigh(obs_items, obs_ratings,
                              train.user_items(user), train.user_ratings(user))
    return weights


def predict_from_weights(train, weights, obs_mean, item):
    """Weighted mean-offset prediction; None (abstain) without weighted raters."""
    raters, ratings = train.item_raters(item)
    if len(raters) == 0:
        return None
    w = weights[raters]
    nz = w != 0.0
    if not nz.any():
        return None
    offsets = ratings[nz] - np.array([train.user_mean(u) for u in raters[nz]])
    value = obs_mean + float((w[nz] * offsets).sum() / np.abs(w[nz]).sum())
    return float(np.clip(value, 1.0, train.scale))


def memory_predict(train, obs_items, obs_ratings, item, method):
    """Predict one rating for a test user; None (abstain) without neighbors."""
    weights = similarity_weights(train, obs_items, obs_ratings, method)
    obs_mean = float(np.asarray(obs_ratings, dtype=float).mean())
    return predict_from_weights(train, weights, obs_mean, item)
