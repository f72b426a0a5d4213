"""Classic model-based comparators: aspect model, user clustering, personality diagnosis."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .em import (
    ConvergenceCriterion,
    normalize_distribution,
    random_distribution,
    run_em,
    temper,
)
from .errors import FoldInError, NumericError, ValidationError

log = logging.getLogger(__name__)

EXPECTED = "expected"
ARGMAX = "argmax"


# ---------------------------------------------------------------------------
# Aspect model: one latent class renders user, item, and rating independent.
# ---------------------------------------------------------------------------

@dataclass
class AspectParams:
    class_prior: np.ndarray       # (K,)
    item_given_class: np.ndarray  # (K, M)
    user_given_class: np.ndarray  # (K, N)
    rating_given_class: np.ndarray  # (K, R)

    @property
    def n_classes(self):
        return self.class_prior.shape[0]

    @property
    def n_items(self):
        return self.item_given_class.shape[1]

    @property
    def n_users(self):
        return self.user_given_class.shape[1]

    @property
    def scale(self):
        return self.rating_given_class.shape[1]

    def tables(self):
        return {
            "class_prior": self.class_prior,
            "item_given_class": self.item_given_class,
            "user_given_class": self.user_given_class,
            "rating_given_class": self.rating_given_class,
        }

    def validate(self, atol=1e-9):
        for name, t in self.tables().items():
            axis = 0 if name == "class_prior" else -1
            if not np.allclose(t.sum(axis=axis), 1.0, atol=atol):
                raise ValidationError(f"{name} rows do not sum to 1")

    @classmethod
    def random(cls, rng, n_users, n_items, scale, n_classes=10):
        if n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        return cls(
            class_prior=random_distribution(rng, (n_classes,), axis=0),
            item_given_class=random_distribution(rng, (n_classes, n_items)),
            user_given_class=random_distribution(rng, (n_classes, n_users)),
            rating_given_class=random_distribution(rng, (n_classes, scale)),
        )


def aspect_joint(params, user, item, rating):
    """P(item, user, rating) summed over the latent class."""
    return float(np.sum(
        params.class_prior
        * params.item_given_class[:, item]
        * params.user_given_class[:, user]
        * params.rating_given_class[:, rating - 1]
    ))


class AspectModel:
    def __init__(self, table, n_classes=10):
        if len(table) == 0:
            raise ValidationError("cannot train on an empty table")
        if n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        self.table = table
        self.n_classes = n_classes
        self.params = None

    def initialize(self, rng):
        self.params = AspectParams.random(
            rng, self.table.num_users, self.table.num_items, self.table.scale,
            n_classes=self.n_classes)

    def _joint_terms(self):
        p = self.params
        t = self.table
        return (
            p.class_prior[:, None]
            * p.item_given_class[:, t.items]
            * p.user_given_class[:, t.users]
            * p.rating_given_class[:, t.ratings - 1]
        ).T                                                   # (L, K)

    def e_step(self, beta=1.0):
        joint = temper(self._joint_terms(), beta)
        denom = joint.sum(axis=1)
        bad = np.flatnonzero(denom <= 0.0)
        if len(bad):
            raise NumericError(f"all-zero posterior for triple {int(bad[0])}")
        return joint / denom[:, None]

    def m_step(self, resp):
        t = self.table
        k = self.n_classes
        item_counts = np.zeros((t.num_items, k))
        np.add.at(item_counts, t.items, resp)
        user_counts = np.zeros((t.num_users, k))
        np.add.at(user_counts, t.users, resp)
        rating_counts = np.zeros((t.scale, k))
        np.add.at(rating_counts, t.ratings - 1, resp)
        self.params = AspectParams(
            class_prior=resp.sum(axis=0) / len(t),
            item_given_class=normalize_distribution(item_counts.T, label="item_given_class"),
            user_given_class=normalize_distribution(user_counts.T, label="user_given_class"),
            rating_given_class=normalize_distribution(rating_counts.T, label="rating_given_class"),
        )

    def log_likelihood(self):
        with np.errstate(divide="ignore"):
            return float(np.log(self._joint_terms().sum(axis=1)).sum())


def train_aspect(table, n_classes=10, schedule=None, criterion=None, seed=0):
    model = AspectModel(table, n_classes=n_classes)
    trace = run_em(model, schedule=schedule, criterion=criterion, seed=seed)
    return model.params, trace


def aspect_fold_in(params, items, ratings, alpha=1.0, criterion=None):
    """Class-mixture weights for a test user, global tables frozen."""
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.int64)
    if len(items) == 0:
        raise FoldInError("fold-in requires at least one observed rating")
    if alpha < 0:
        raise ValidationError("smoothing alpha must be >= 0")
    criterion = criterion or ConvergenceCriterion()
    criterion.validate()
    k = params.n_classes
    obs_term = (params.item_given_class[:, items]
                * params.rating_given_class[:, ratings - 1])  # (K, n)
    weights = np.full(k, 1.0 / k)
    prev = None
    for _ in range(criterion.max_iters):
        joint = weights[:, None] * obs_term
        denom = joint.sum(axis=0)
        if (denom <= 0.0).any():
            raise NumericError("all-zero fold-in posterior for an observation")
        resp = joint / denom
        weights = (resp.sum(axis=1) + alpha) / (len(items) + alpha * k)
        ll = float(np.log(denom).sum())
        if prev is not None and abs(ll - prev) / max(1.0, abs(prev)) < criterion.rel_loglik_tol:
            break
        prev = ll
    return weights


def aspect_rating_distribution(params, weights, item):
    dist = np.einsum("k,k,kr->r", np.asarray(weights),
                     params.item_given_class[:, item], params.rating_given_class)
    total = dist.sum()
    if total <= 0.0:
        return np.full(params.scale, 1.0 / params.scale)
    return dist / total


def aspect_predict(params, weights, item, mode=EXPECTED):
    if mode not in (EXPECTED, ARGMAX):
        raise ValidationError(f"unknown prediction mode {mode!r}")
    dist = aspect_rating_distribution(params, weights, item)
    if mode == EXPECTED:
        return float(np.arange(1, params.scale + 1) @ dist)
    return int(np.argmax(dist)) + 1


# ---------------------------------------------------------------------------
# User clustering: naive-Bayes user classes with per-item rating tables.
# ---------------------------------------------------------------------------

@dataclass
class ClusterParams:
    class_prior: np.ndarray            # (K,)
    rating_given_class_item: np.ndarray  # (K, M, R)

    @property
    def n_classes(self):
        return self.class_prior.shape[0]

    @property
    def n_items(self):
        return self.rating_given_class_item.shape[1]

    @property
    def scale(self):
        return self.rating_given_class_item.shape[2]

    def validate(self, atol=1e-9):
        if not np.allclose(self.class_prior.sum(), 1.0, atol=atol):
            raise ValidationError("class_prior does not sum to 1")
        if not np.allclose(self.rating_given_class_item.sum(axis=-1), 1.0, atol=atol):
            raise ValidationError("rating tables do not sum to 1")

    @classmethod
    def random(cls, rng, n_items, scale, n_classes=10):
        if n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        return cls(
            class_prior=random_distribution(rng, (n_classes,), axis=0),
            rating_given_class_item=random_distribution(rng, (n_classes, n_items, scale)),
        )


def cluster_user_likelihood(params, items, ratings):
    """Marginal probability of one user's rating pattern over the classes."""
    terms = params.rating_given_class_item[:, items, np.asarray(ratings) - 1]  # (K, n)
    return float((params.class_prior * terms.prod(axis=1)).sum())


class ClusterModel:
    """Mixture over whole users; each user is one observation.

    The M-step applies add-one smoothing to every (class, item) rating table,
    so the traced objective is the smoothed (MAP) one the updates maximize;
    it is non-decreasing under EM, while the bare data likelihood need not be.
    """

    def __init__(self, table, n_classes=10):
        if len(table) == 0:
            raise ValidationError("cannot train on an empty table")
        if n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        self.table = table
        self.n_classes = n_classes
        self.params = None

    def initialize(self, rng):
        self.params = ClusterParams.random(
            rng, self.table.num_items, self.table.scale, n_classes=self.n_classes)

    def _user_log_joint(self):
        t = self.table
        with np.errstate(divide="ignore"):
            log_terms = np.log(
                self.params.rating_given_class_item[:, t.items, t.ratings - 1])  # (K, L)
        sums = np.zeros((t.num_users, self.n_classes))
        np.add.at(sums, t.users, log_terms.T)
        with np.errstate(divide="ignore"):
            return sums + np.log(self.params.class_prior)

    def e_step(self, beta=1.0):
        """Per-user responsibilities over classes, shape (N, K)."""
        log_joint = self._user_log_joint()
        if beta != 1.0:
            log_joint = log_joint * beta
        peak = log_joint.max(axis=1, keepdims=True)
        if not np.isfinite(peak).all():
            raise NumericError("all-zero posterior for a user")
        resp = np.exp(log_joint - peak)
        return resp / resp.sum(axis=1, keepdims=True)

    def m_step(self, resp):
        t = self.table
        weights = resp[t.users]                              # (L, K)
        counts = np.zeros((t.num_items, t.scale, self.n_classes))
        np.add.at(counts, (t.items, t.ratings - 1), weights)
        counts = counts.transpose(2, 0, 1)                   # (K, M, R)
        smoothed = counts + 1.0
        self.params = ClusterParams(
            class_prior=resp.sum(axis=0) / t.num_users,
            rating_given_class_item=smoothed / smoothed.sum(axis=-1, keepdims=True),
        )

    def data_log_likelihood(self):
        log_joint = self._user_log_joint()
        peak = log_joint.max(axis=1, keepdims=True)
        return float((peak[:, 0] + np.log(np.exp(log_joint - peak).sum(axis=1))).sum())

    def log_likelihood(self):
        """Smoothed training objective: data log-likelihood plus the add-one prior."""
        prior = float(np.log(self.params.rating_given_class_item).sum())
        return self.data_log_likelihood() + prior


def train_clusters(table, n_classes=10, schedule=None, criterion=None, seed=0):
    model = ClusterModel(table, n_classes=n_classes)
    trace = run_em(model, schedule=schedule, criterion=criterion, seed=seed)
    return model.params, trace


def cluster_posterior(params, items, ratings):
    """P(class | observed ratings) for a test user."""
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_w = np.log(params.class_prior) + np.log(
            params.rating_given_class_item[:, items, ratings - 1]).sum(axis=1)
    peak = log_w.max()
    if not np.isfinite(peak):
        raise NumericError("all-zero cluster posterior for a user")
    w = np.exp(log_w - peak)
    return w / w.sum()


def cluster_predict(params, items, ratings, item, mode=EXPECTED):
    """Mix per-class rating tables by the user's class posterior."""
    if mode not in (EXPECTED, ARGMAX):
        raise ValidationError(f"unknown prediction mode {mode!r}")
    posterior = cluster_posterior(params, items, ratings)
    dist = posterior @ params.rating_given_class_item[:, item, :]
    if mode == EXPECTED:
        return float(np.arange(1, params.scale + 1) @ dist)
    return int(np.argmax(dist)) + 1


# ---------------------------------------------------------------------------
# Personality diagnosis: every training user is a noisy ground-truth profile.
# ---------------------------------------------------------------------------

def pd_weights(train, items, ratings, sigma=1.0):
    """Gaussian-kernel resemblance of each training user to the observed ratings.

    A training user with no co-rated items gets weight 1 (an empty product).
    """
    if sigma <= 0:
        raise ValidationError("sigma must be > 0")
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.float64)
    observed = np.full(train.num_items, np.nan)
    observed[items] = ratings
    weights = np.empty(train.num_users)
    for user in range(train.num_users):
        u_items = train.user_items(user)
        u_ratings = train.user_ratings(user)
        obs_vals = observed[u_items]
        mask = ~np.isnan(obs_vals)
        dev = obs_vals[mask] - u_ratings[mask]
        weights[user] = np.exp(-np.square(dev).sum() / (2.0 * sigma * sigma))
    return weights


def pd_scores(train, items, ratings, item, sigma=1.0):
    """Per-candidate likelihood scores for rating ``item`` as 1..scale.

    Returns None when no training user rated the item (abstention).
    """
    raters, rater_ratings = train.item_raters(item)
    if len(raters) == 0:
        return None
    weights = pd_weights(train, items, ratings, sigma=sigma)[raters]
    candidates = np.arange(1, train.scale + 1)
    kernel = np.exp(-np.square(rater_ratings[:, None] - candidates[None, :])
                    / (2.0 * sigma * sigma))
    return weights @ kernel


def pd_predict(train, items, ratings, item, sigma=1.0):
    """Most likely rating category; ties go to the lower rating.

    Returns None (abstains) when no training user rated the item.
    """
    scores = pd_scores(train, items, ratings, item, sigma=sigma)
    if scores is None:
        return None
    return int(np.argmax(scores)) + 1
