"""Decoupled latent-class rating model and its single-pathway baseline peer.

The decoupled model explains a rating event through four latent variables:
an item class, a per-user preference class, a per-user rating-style class,
and a preference level that links preference class and item class. The
rating emitted depends only on the rating-style class and the preference
level, so users with the same tastes but different rating habits share
preference structure while keeping separate rating tables.

The baseline peer removes the rating-style class and the preference level:
ratings are emitted directly from (preference class, item class).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import RatingTable
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


def _check_mode(mode):
    if mode not in (EXPECTED, ARGMAX):
        raise ValidationError(f"unknown prediction mode {mode!r}")


def _check_index(value, size, what):
    if value < 0 or value >= size:
        raise IndexError(f"{what} {value} out of range 0..{size - 1}")


@dataclass
class DecoupledParams:
    """The six probability tables of the decoupled model.

    Shapes: item_class_prior (K_x,), item_given_class (K_x, M),
    user_pref_class (N, K_p), user_rating_class (N, K_r),
    pref_level (K_p, K_x, K_pref), rating_given_level (K_r, K_pref, R).
    Each table is a conditional distribution along its last axis except the
    two item tables, which are a prior and per-class rows over items.
    """

    item_class_prior: np.ndarray
    item_given_class: np.ndarray
    user_pref_class: np.ndarray
    user_rating_class: np.ndarray
    pref_level: np.ndarray
    rating_given_level: np.ndarray

    @property
    def n_users(self):
        return self.user_pref_class.shape[0]

    @property
    def n_items(self):
        return self.item_given_class.shape[1]

    @property
    def scale(self):
        return self.rating_given_level.shape[2]

    @property
    def n_item_classes(self):
        return self.item_class_prior.shape[0]

    @property
    def n_pref_classes(self):
        return self.user_pref_class.shape[1]

    @property
    def n_rating_classes(self):
        return self.user_rating_class.shape[1]

    @property
    def n_pref_levels(self):
        return self.pref_level.shape[2]

    def tables(self):
        return {
            "item_class_prior": self.item_class_prior,
            "item_given_class": self.item_given_class,
            "user_pref_class": self.user_pref_class,
            "user_rating_class": self.user_rating_class,
            "pref_level": self.pref_level,
            "rating_given_level": self.rating_given_level,
        }

    def validate(self, atol=1e-9):
        for name, t in self.tables().items():
            axis = 0 if name == "item_class_prior" else -1
            if (t < -atol).any() or (t > 1 + atol).any():
                raise ValidationError(f"{name} has entries outside [0, 1]")
            if not np.allclose(t.sum(axis=axis), 1.0, atol=atol):
                raise ValidationError(f"{name} rows do not sum to 1")

    @classmethod
    def random(cls, rng, n_users, n_items, scale, n_item_classes=5,
               n_pref_classes=3, n_rating_classes=10, n_pref_levels=None):
        if n_pref_levels is None:
            n_pref_levels = scale
        _check_sizes(n_item_classes, n_pref_classes, n_rating_classes, n_pref_levels)
        return cls(
            item_class_prior=random_distribution(rng, (n_item_classes,), axis=0),
            item_given_class=random_distribution(rng, (n_item_classes, n_items)),
            user_pref_class=random_distribution(rng, (n_users, n_pref_classes)),
            user_rating_class=random_distribution(rng, (n_users, n_rating_classes)),
            pref_level=random_distribution(rng, (n_pref_classes, n_item_classes, n_pref_levels)),
            rating_given_level=random_distribution(rng, (n_rating_classes, n_pref_levels, scale)),
        )

    @classmethod
    def uniform(cls, n_users, n_items, scale, n_item_classes=5,
                n_pref_classes=3, n_rating_classes=10, n_pref_levels=None):
        if n_pref_levels is None:
            n_pref_levels = scale
        _check_sizes(n_item_classes, n_pref_classes, n_rating_classes, n_pref_levels)
        return cls(
            item_class_prior=np.full(n_item_classes, 1.0 / n_item_classes),
            item_given_class=np.full((n_item_classes, n_items), 1.0 / n_items),
            user_pref_class=np.full((n_users, n_pref_classes), 1.0 / n_pref_classes),
            user_rating_class=np.full((n_users, n_rating_classes), 1.0 / n_rating_classes),
            pref_level=np.full((n_pref_classes, n_item_classes, n_pref_levels), 1.0 / n_pref_levels),
            rating_given_level=np.full((n_rating_classes, n_pref_levels, scale), 1.0 / scale),
        )


@dataclass
class DecoupledProfile:
    """Fold-in posterior of one test user over preference and rating classes."""

    pref: np.ndarray
    rating: np.ndarray


def _check_sizes(*sizes):
    for s in sizes:
        if s < 1:
            raise ValidationError("class counts must be >= 1")


def joint_prob(params, pref_weights, rating_weights, item, rating):
    """P(item, rating | user) for a user described by class-weight vectors.

    Sums the complete-data joint over item class, preference class,
    rating-style class, and preference level.
    """
    _check_index(item, params.n_items, "item")
    _check_index(rating - 1, params.scale, "rating-1")
    emit = params.rating_given_level[:, :, rating - 1]          # (K_r, K_pref)
    level_mix = np.asarray(rating_weights) @ emit               # (K_pref,)
    pair = params.pref_level @ level_mix                        # (K_p, K_x)
    item_term = params.item_class_prior * params.item_given_class[:, item]
    return float(np.asarray(pref_weights) @ pair @ item_term)


def rating_distribution(params, profile, item):
    """Normalized P(rating | item, user profile) over 1..scale.

    An item with zero probability under every item class carries no
    information; the distribution falls back to uniform.
    """
    _check_index(item, params.n_items, "item")
    mix = np.einsum("q,qfr->fr", profile.rating, params.rating_given_level)
    pair = np.einsum("pxf,fr->pxr", params.pref_level, mix)
    item_term = params.item_class_prior * params.item_given_class[:, item]
    dist = np.einsum("p,x,pxr->r", profile.pref, item_term, pair)
    total = dist.sum()
    if total <= 0.0:
        return np.full(params.scale, 1.0 / params.scale)
    return dist / total


def predict_rating(params, profile, item, mode=EXPECTED):
    """Predict a rating from a fold-in profile: expected value or argmax."""
    _check_mode(mode)
    dist = rating_distribution(params, profile, item)
    if mode == EXPECTED:
        return float(np.arange(1, params.scale + 1) @ dist)
    return int(np.argmax(dist)) + 1


class DecoupledModel:
    """EM-trainable decoupled model bound to one rating table."""

    def __init__(self, table, n_item_classes=5, n_pref_classes=3,
                 n_rating_classes=10, n_pref_levels=None):
        if len(table) == 0:
            raise ValidationError("cannot train on an empty table")
        if n_pref_levels is None:
            n_pref_levels = table.scale
        _check_sizes(n_item_classes, n_pref_classes, n_rating_classes, n_pref_levels)
        self.table = table
        self.sizes = (n_item_classes, n_pref_classes, n_rating_classes, n_pref_levels)
        self.params = None

    def initialize(self, rng):
        kx, kp, kr, kf = self.sizes
        self.params = DecoupledParams.random(
            rng, self.table.num_users, self.table.num_items, self.table.scale,
            n_item_classes=kx, n_pref_classes=kp, n_rating_classes=kr, n_pref_levels=kf,
        )

    def _factors(self):
        p = self.params
        t = self.table
        item_term = (p.item_class_prior[:, None] * p.item_given_class)[:, t.items]  # (K_x, L)
        pref_w = p.user_pref_class[t.users]                                         # (L, K_p)
        rate_w = p.user_rating_class[t.users]                                       # (L, K_r)
        emit = p.rating_given_level[:, :, t.ratings - 1]                            # (K_r, K_f, L)
        return item_term, pref_w, rate_w, emit

    def e_step(self, beta=1.0):
        """Responsibilities over (pref class, rating class, item class, level).

        Shape (L, K_p, K_r, K_x, K_pref); each triple's slice sums to 1.
        """
        it, pw, rw, em = self._factors()
        joint = np.einsum("xl,lp,lq,pxf,qfl->lpqxf", it, pw, rw, self.params.pref_level, em)
        joint = temper(joint, beta)
        denom = joint.reshape(len(self.table), -1).sum(axis=1)
        bad = np.flatnonzero(denom <= 0.0)
        if len(bad):
            raise NumericError(f"all-zero posterior for triple {int(bad[0])}")
        return joint / denom[:, None, None, None, None]

    def m_step(self, resp):
        """Count-ratio updates for all six tables from the responsibilities."""
        t = self.table
        n_users, n_items, scale = t.num_users, t.num_items, t.scale
        kx, kp, kr, kf = self.sizes

        marg_x = resp.sum(axis=(1, 2, 4))                    # (L, K_x)
        marg_p = resp.sum(axis=(2, 3, 4))                    # (L, K_p)
        marg_q = resp.sum(axis=(1, 3, 4))                    # (L, K_r)

        class_mass = marg_x.sum(axis=0)                      # (K_x,)
        item_counts = np.zeros((n_items, kx))
        np.add.at(item_counts, t.items, marg_x)
        user_pref = np.zeros((n_users, kp))
        np.add.at(user_pref, t.users, marg_p)
        user_rate = np.zeros((n_users, kr))
        np.add.at(user_rate, t.users, marg_q)
        level_counts = resp.sum(axis=2).sum(axis=0)          # (K_p, K_x, K_f)
        rate_counts = np.zeros((scale, kr, kf))
        np.add.at(rate_counts, t.ratings - 1, resp.sum(axis=(1, 3)))

        self.params = DecoupledParams(
            item_class_prior=class_mass / len(t),
            item_given_class=normalize_distribution(item_counts.T, label="item_given_class"),
            user_pref_class=normalize_distribution(user_pref, label="user_pref_class"),
            user_rating_class=normalize_distribution(user_rate, label="user_rating_class"),
            pref_level=normalize_distribution(level_counts, label="pref_level"),
            rating_given_level=normalize_distribution(
                rate_counts.transpose(1, 2, 0), label="rating_given_level"),
        )

    def log_likelihood(self):
        it, pw, rw, em = self._factors()
        lik = np.einsum("xl,lp,lq,pxf,qfl->l", it, pw, rw, self.params.pref_level, em)
        with np.errstate(divide="ignore"):
            return float(np.log(lik).sum())


def train(table, n_item_classes=5, n_pref_classes=3, n_rating_classes=10,
          n_pref_levels=None, schedule=None, criterion=None, seed=0):
    """Fit a decoupled model by (annealed) EM; returns (params, trace)."""
    model = DecoupledModel(table, n_item_classes, n_pref_classes,
                           n_rating_classes, n_pref_levels)
    trace = run_em(model, schedule=schedule, criterion=criterion, seed=seed)
    return model.params, trace


def fold_in(params, items, ratings, alpha=1.0, criterion=None):
    """Estimate a test user's class profiles with all global tables frozen.

    Runs EM over the user's observed (item, rating) pairs, updating only the
    preference-class and rating-class vectors. ``alpha`` adds uniform
    pseudo-counts (Dirichlet smoothing), keeping the profiles strictly
    positive.
    """
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.int64)
    if len(items) == 0:
        raise FoldInError("fold-in requires at least one observed rating")
    if alpha < 0:
        raise ValidationError("smoothing alpha must be >= 0")
    for i in items:
        _check_index(i, params.n_items, "item")
    for r in ratings:
        _check_index(r - 1, params.scale, "rating-1")
    criterion = criterion or ConvergenceCriterion()
    criterion.validate()

    kp, kr = params.n_pref_classes, params.n_rating_classes
    n_obs = len(items)
    item_term = (params.item_class_prior[:, None] * params.item_given_class)[:, items]
    emit = params.rating_given_level[:, :, ratings - 1]      # (K_r, K_f, n)
    pref = np.full(kp, 1.0 / kp)
    rate = np.full(kr, 1.0 / kr)

    prev = None
    for _ in range(criterion.max_iters):
        joint = np.einsum("xn,p,q,pxf,qfn->npqxf", item_term, pref, rate,
                          params.pref_level, emit)
        denom = joint.reshape(n_obs, -1).sum(axis=1)
        if (denom <= 0.0).any():
            raise NumericError("all-zero fold-in posterior for an observation")
        resp = joint / denom[:, None, None, None, None]
        pref = (resp.sum(axis=(0, 2, 3, 4)) + alpha) / (n_obs + alpha * kp)
        rate = (resp.sum(axis=(0, 1, 3, 4)) + alpha) / (n_obs + alpha * kr)
        ll = float(np.log(denom).sum())
        if prev is not None and abs(ll - prev) / max(1.0, abs(prev)) < criterion.rel_loglik_tol:
            break
        prev = ll
    return DecoupledProfile(pref=pref, rating=rate)


def synthesize(params, num_users, ratings_per_user, seed=0):
    """Ancestral sampling from the decoupled model's generative process.

    Each synthetic user draws one (preference class, rating class) pair from
    its rows of the user tables, then samples ratings one at a time;
    duplicate (user, item) draws are rejected and re-sampled.
    """
    params.validate(atol=1e-6)
    if num_users < 1 or ratings_per_user < 1:
        raise ValidationError("num_users and ratings_per_user must be >= 1")
    if num_users > params.n_users:
        raise ValidationError("params carry fewer user rows than requested users")
    if ratings_per_user > params.n_items:
        raise ValidationError(
            f"cannot draw {ratings_per_user} distinct items from {params.n_items}")
    reachable = int(np.count_nonzero(params.item_class_prior @ params.item_given_class > 0))
    if ratings_per_user > reachable:
        raise ValidationError(
            f"only {reachable} items are reachable under these tables, "
            f"need {ratings_per_user} per user")

    rng = np.random.default_rng(seed)

    def draw(cum):
        # inverse-CDF draw; clamp guards cum[-1] being a hair under 1
        return min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)

    class_cum = np.cumsum(params.item_class_prior)
    item_cum = np.cumsum(params.item_given_class, axis=1)
    pref_cum = np.cumsum(params.user_pref_class, axis=1)
    rate_cum = np.cumsum(params.user_rating_class, axis=1)
    level_cum = np.cumsum(params.pref_level, axis=2)
    rating_cum = np.cumsum(params.rating_given_level, axis=2)

    users, items, ratings = [], [], []
    for user in range(num_users):
        pref_class = draw(pref_cum[user])
        rate_class = draw(rate_cum[user])
        seen = set()
        while len(seen) < ratings_per_user:
            item_class = draw(class_cum)
            item = draw(item_cum[item_class])
            if item in seen:
                continue
            seen.add(item)
            level = draw(level_cum[pref_class, item_class])
            rating = draw(rating_cum[rate_class, level]) + 1
            users.append(user)
            items.append(item)
            ratings.append(rating)
    return RatingTable(users, items, ratings, num_users, params.n_items, params.scale)


# ---------------------------------------------------------------------------
# Baseline peer: rating emitted directly from (preference class, item class).
# ---------------------------------------------------------------------------

@dataclass
class BaselineParams:
    item_class_prior: np.ndarray      # (K_x,)
    item_given_class: np.ndarray      # (K_x, M)
    user_pref_class: np.ndarray       # (N, K_p)
    rating_given_classes: np.ndarray  # (K_p, K_x, R)

    @property
    def n_users(self):
        return self.user_pref_class.shape[0]

    @property
    def n_items(self):
        return self.item_given_class.shape[1]

    @property
    def scale(self):
        return self.rating_given_classes.shape[2]

    @property
    def n_item_classes(self):
        return self.item_class_prior.shape[0]

    @property
    def n_pref_classes(self):
        return self.user_pref_class.shape[1]

    def tables(self):
        return {
            "item_class_prior": self.item_class_prior,
            "item_given_class": self.item_given_class,
            "user_pref_class": self.user_pref_class,
            "rating_given_classes": self.rating_given_classes,
        }

    def validate(self, atol=1e-9):
        for name, t in self.tables().items():
            axis = 0 if name == "item_class_prior" else -1
            if (t < -atol).any() or (t > 1 + atol).any():
                raise ValidationError(f"{name} has entries outside [0, 1]")
            if not np.allclose(t.sum(axis=axis), 1.0, atol=atol):
                raise ValidationError(f"{name} rows do not sum to 1")

    @classmethod
    def random(cls, rng, n_users, n_items, scale, n_item_classes=5, n_pref_classes=3):
        _check_sizes(n_item_classes, n_pref_classes)
        return cls(
            item_class_prior=random_distribution(rng, (n_item_classes,), axis=0),
            item_given_class=random_distribution(rng, (n_item_classes, n_items)),
            user_pref_class=random_distribution(rng, (n_users, n_pref_classes)),
            rating_given_classes=random_distribution(rng, (n_pref_classes, n_item_classes, scale)),
        )


def baseline_joint_prob(params, pref_weights, item, rating):
    """P(item, rating | user) under the baseline peer."""
    _check_index(item, params.n_items, "item")
    _check_index(rating - 1, params.scale, "rating-1")
    item_term = params.item_class_prior * params.item_given_class[:, item]
    emit = params.rating_given_classes[:, :, rating - 1]     # (K_p, K_x)
    return float(np.asarray(pref_weights) @ emit @ item_term)


def baseline_rating_distribution(params, pref_weights, item):
    _check_index(item, params.n_items, "item")
    item_term = params.item_class_prior * params.item_given_class[:, item]
    dist = np.einsum("p,x,pxr->r", np.asarray(pref_weights), item_term,
                     params.rating_given_classes)
    total = dist.sum()
    if total <= 0.0:
        return np.full(params.scale, 1.0 / params.scale)
    return dist / total


def baseline_predict_rating(params, pref_weights, item, mode=EXPECTED):
    _check_mode(mode)
    dist = baseline_rating_distribution(params, pref_weights, item)
    if mode == EXPECTED:
        return float(np.arange(1, params.scale + 1) @ dist)
    return int(np.argmax(dist)) + 1


class BaselineModel:
    """EM-trainable baseline peer bound to one rating table."""

    def __init__(self, table, n_item_classes=5, n_pref_classes=3):
        if len(table) == 0:
            raise ValidationError("cannot train on an empty table")
        _check_sizes(n_item_classes, n_pref_classes)
        self.table = table
        self.sizes = (n_item_classes, n_pref_classes)
        self.params = None

    def initialize(self, rng):
        kx, kp = self.sizes
        self.params = BaselineParams.random(
            rng, self.table.num_users, self.table.num_items, self.table.scale,
            n_item_classes=kx, n_pref_classes=kp)

    def _factors(self):
        p = self.params
        t = self.table
        item_term = (p.item_class_prior[:, None] * p.item_given_class)[:, t.items]
        pref_w = p.user_pref_class[t.users]
        emit = p.rating_given_classes[:, :, t.ratings - 1]   # (K_p, K_x, L)
        return item_term, pref_w, emit

    def e_step(self, beta=1.0):
        it, pw, em = self._factors()
        joint = np.einsum("xl,lp,pxl->lpx", it, pw, em)
        joint = temper(joint, beta)
        denom = joint.reshape(len(self.table), -1).sum(axis=1)
        bad = np.flatnonzero(denom <= 0.0)
        if len(bad):
            raise NumericError(f"all-zero posterior for triple {int(bad[0])}")
        return joint / denom[:, None, None]

    def m_step(self, resp):
        t = self.table
        kx, kp = self.sizes
        marg_x = resp.sum(axis=1)                            # (L, K_x)
        marg_p = resp.sum(axis=2)                            # (L, K_p)
        item_counts = np.zeros((t.num_items, kx))
        np.add.at(item_counts, t.items, marg_x)
        user_pref = np.zeros((t.num_users, kp))
        np.add.at(user_pref, t.users, marg_p)
        rate_counts = np.zeros((t.scale, kp, kx))
        np.add.at(rate_counts, t.ratings - 1, resp)
        self.params = BaselineParams(
            item_class_prior=marg_x.sum(axis=0) / len(t),
            item_given_class=normalize_distribution(item_counts.T, label="item_given_class"),
            user_pref_class=normalize_distribution(user_pref, label="user_pref_class"),
            rating_given_classes=normalize_distribution(
                rate_counts.transpose(1, 2, 0), label="rating_given_classes"),
        )

    def log_likelihood(self):
        it, pw, em = self._factors()
        lik = np.einsum("xl,lp,pxl->l", it, pw, em)
        with np.errstate(divide="ignore"):
            return float(np.log(lik).sum())


def train_baseline(table, n_item_classes=5, n_pref_classes=3,
                   schedule=None, criterion=None, seed=0):
    model = BaselineModel(table, n_item_classes, n_pref_classes)
    trace = run_em(model, schedule=schedule, criterion=criterion, seed=seed)
    return model.params, trace


def baseline_fold_in(params, items, ratings, alpha=1.0, criterion=None):
    """Fold in a test user for the baseline peer (preference profile only)."""
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.int64)
    if len(items) == 0:
        raise FoldInError("fold-in requires at least one observed rating")
    if alpha < 0:
        raise ValidationError("smoothing alpha must be >= 0")
    criterion = criterion or ConvergenceCriterion()
    criterion.validate()
    kp = params.n_pref_classes
    n_obs = len(items)
    item_term = (params.item_class_prior[:, None] * params.item_given_class)[:, items]
    emit = params.rating_given_classes[:, :, ratings - 1]    # (K_p, K_x, n)
    pref = np.full(kp, 1.0 / kp)
    prev = None
    for _ in range(criterion.max_iters):
        joint = np.einsum("xn,p,pxn->npx", item_term, pref, emit)
        denom = joint.reshape(n_obs, -1).sum(axis=1)
        if (denom <= 0.0).any():
            raise NumericError("all-zero fold-in posterior for an observation")
        resp = joint / denom[:, None, None]
        pref = (resp.sum(axis=(0, 2)) + alpha) / (n_obs + alpha * kp)
        ll = float(np.log(denom).sum())
        if prev is not None and abs(ll - prev) / max(1.0, abs(prev)) < criterion.rel_loglik_tol:
            break
        prev = ll
    return pref
