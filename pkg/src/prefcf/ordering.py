"""Pairwise preference-ordering model.

Instead of absolute ratings, this model explains the relative order of every
pair of items a user rated. A user class and two item classes are drawn per
pair; a propensity table v[item class, user class] gives the chance that the
user class prefers the item class, and the observed order (equal / first
preferred / second preferred) follows from two independent preference coin
flips with those propensities.

Training uses EM over an augmented latent space that includes the two coin
flips, which gives closed-form count-ratio updates for every table including
the propensities.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import NamedTuple

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

EQUAL = 0
FIRST_PREFERRED = 1
SECOND_PREFERRED = 2

# _ORDER_BITS[order, bit_a, bit_b] = 1 when the coin flips produce the order.
_ORDER_BITS = np.zeros((3, 2, 2))
_ORDER_BITS[EQUAL, 0, 0] = _ORDER_BITS[EQUAL, 1, 1] = 1.0
_ORDER_BITS[FIRST_PREFERRED, 1, 0] = 1.0
_ORDER_BITS[SECOND_PREFERRED, 0, 1] = 1.0


class RatedPair(NamedTuple):
    user: int
    item_a: int
    item_b: int
    order: int


def rating_order(r, r_prime):
    """0 when the ratings tie, 1 when the first is higher, 2 when lower."""
    if r == r_prime:
        return EQUAL
    return FIRST_PREFERRED if r > r_prime else SECOND_PREFERRED


def order_prob(v_a, v_b, order):
    """Probability of an order outcome given the two preference propensities."""
    if order == EQUAL:
        return v_a * v_b + (1.0 - v_a) * (1.0 - v_b)
    if order == FIRST_PREFERRED:
        return v_a * (1.0 - v_b)
    if order == SECOND_PREFERRED:
        return (1.0 - v_a) * v_b
    raise ValidationError(f"unknown order {order!r}")


@dataclass
class OrderingParams:
    """Class tables plus the preference-propensity matrix.

    user_class_prior (K_y,), user_given_class (K_y, N), item_class_prior
    (K_x,), item_given_class (K_x, M), propensity (K_x, K_y) with entries in
    [0, 1].
    """

    user_class_prior: np.ndarray
    user_given_class: np.ndarray
    item_class_prior: np.ndarray
    item_given_class: np.ndarray
    propensity: np.ndarray

    @property
    def n_users(self):
        return self.user_given_class.shape[1]

    @property
    def n_items(self):
        return self.item_given_class.shape[1]

    @property
    def n_user_classes(self):
        return self.user_class_prior.shape[0]

    @property
    def n_item_classes(self):
        return self.item_class_prior.shape[0]

    def validate(self, atol=1e-9):
        pairs = [
            ("user_class_prior", self.user_class_prior, 0),
            ("user_given_class", self.user_given_class, -1),
            ("item_class_prior", self.item_class_prior, 0),
            ("item_given_class", self.item_given_class, -1),
        ]
        for name, t, axis in pairs:
            if not np.allclose(t.sum(axis=axis), 1.0, atol=atol):
                raise ValidationError(f"{name} rows do not sum to 1")
        if (self.propensity < -atol).any() or (self.propensity > 1 + atol).any():
            raise ValidationError("propensity entries must lie in [0, 1]")

    @classmethod
    def random(cls, rng, n_users, n_items, n_user_classes=3, n_item_classes=5):
        if n_user_classes < 1 or n_item_classes < 1:
            raise ValidationError("class counts must be >= 1")
        return cls(
            user_class_prior=random_distribution(rng, (n_user_classes,), axis=0),
            user_given_class=random_distribution(rng, (n_user_classes, n_users)),
            item_class_prior=random_distribution(rng, (n_item_classes,), axis=0),
            item_given_class=random_distribution(rng, (n_item_classes, n_items)),
            propensity=rng.uniform(size=(n_item_classes, n_user_classes)),
        )

    def _bern(self):
        """Stacked coin-flip table: bern[bit, item class, user class]."""
        return np.stack([1.0 - self.propensity, self.propensity])


def pair_joint(params, pair):
    """Joint probability of (user, item pair, observed order).

    Marginalizes the user class and the two independent item-class draws.
    The pair is first brought to a canonical orientation, which makes the
    swap symmetry (exchange items, exchange orders 1 and 2) exact.
    """
    _check_pair(params, pair)
    item_a, item_b, order = pair.item_a, pair.item_b, pair.order
    if order == SECOND_PREFERRED or (order == EQUAL and item_a > item_b):
        item_a, item_b = item_b, item_a
        if order == SECOND_PREFERRED:
            order = FIRST_PREFERRED
    user_term = params.user_class_prior * params.user_given_class[:, pair.user]
    a_term = params.item_class_prior * params.item_given_class[:, item_a]
    b_term = params.item_class_prior * params.item_given_class[:, item_b]
    return float(np.einsum(
        "y,a,b,aby->", user_term, a_term, b_term, _order_table(params)[order]))


def profile_pair_joint(params, profile, item_a, item_b, order):
    """pair_joint with a fold-in profile substituted for the user terms."""
    a_term = params.item_class_prior * params.item_given_class[:, item_a]
    b_term = params.item_class_prior * params.item_given_class[:, item_b]
    return float(np.einsum(
        "y,a,b,aby->", np.asarray(profile), a_term, b_term, _order_table(params)[order]))


def _order_table(params):
    """order_table[order, class_a, class_b, user class] from the propensities."""
    v = params.propensity                                    # (K_x, K_y)
    eq = v[:, None, :] * v[None, :, :] + (1 - v[:, None, :]) * (1 - v[None, :, :])
    first = v[:, None, :] * (1 - v[None, :, :])
    second = (1 - v[:, None, :]) * v[None, :, :]
    return np.stack([eq, first, second])

def _check_pair(params, pair):
    if pair.user < 0 or pair.user >= params.n_users:
        raise IndexError(f"user {pair.user} out of range")
    for item in (pair.item_a, pair.item_b):
        if item < 0 or item >= params.n_items:
            raise IndexError(f"item {item} out of range")
    if pair.item_a == pair.item_b:
        raise ValidationError("a rated pair needs two distinct items")
    if pair.order not in (EQUAL, FIRST_PREFERRED, SECOND_PREFERRED):
        raise ValidationError(f"unknown order {pair.order!r}")


def extract_pairs(table, max_pairs_per_user=None, seed=0):
    """All unordered pairs of each user's rated items, as order observations.

    With a cap, each user contributes a seeded uniform sample of its pairs
    without replacement; selection is reproducible from the seed.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for user in range(table.num_users):
        rows = table.user_triple_indices(user)
        items = table.items[rows]
        ratings = table.ratings[rows]
        combos = list(itertools.combinations(range(len(rows)), 2))
        if max_pairs_per_user is not None and len(combos) > max_pairs_per_user:
            keep = np.sort(rng.choice(len(combos), size=max_pairs_per_user, replace=False))
            combos = [combos[k] for k in keep]
        for i, j in combos:
            pairs.append(RatedPair(
                user=user, item_a=int(items[i]), item_b=int(items[j]),
                order=rating_order(int(ratings[i]), int(ratings[j])),
            ))
    return pairs


class OrderingModel:
    """EM-trainable ordering model over a fixed list of rated pairs."""

    def __init__(self, pairs, n_users, n_items, n_user_classes=3, n_item_classes=5):
        if not pairs:
            raise ValidationError("training requires at least one rated pair")
        self.n_users = n_users
        self.n_items = n_items
        self.sizes = (n_user_classes, n_item_classes)
        self.pair_users = np.array([p.user for p in pairs], dtype=np.int64)
        self.pair_a = np.array([p.item_a for p in pairs], dtype=np.int64)
        self.pair_b = np.array([p.item_b for p in pairs], dtype=np.int64)
        self.pair_order = np.array([p.order for p in pairs], dtype=np.int64)
        self.params = None

    def initialize(self, rng):
        ky, kx = self.sizes
        self.params = OrderingParams.random(
            rng, self.n_users, self.n_items, n_user_classes=ky, n_item_classes=kx)

    def _factors(self):
        p = self.params
        user_term = (p.user_class_prior[:, None] * p.user_given_class)[:, self.pair_users]
        a_term = (p.item_class_prior[:, None] * p.item_given_class)[:, self.pair_a]
        b_term = (p.item_class_prior[:, None] * p.item_given_class)[:, self.pair_b]
        return user_term, a_term, b_term, p._bern(), _ORDER_BITS[self.pair_order]

    def e_step(self, beta=1.0):
        """Responsibilities over (user class, class a, class b, bit a, bit b).

        Shape (P, K_y, K_x, K_x, 2, 2); each pair's slice sums to 1.
        """
        uy, ta, tb, bern, match = self._factors()
        joint = np.einsum("yi,ai,bi,uay,vby,iuv->iyabuv", uy, ta, tb, bern, bern, match)
        joint = temper(joint, beta)
        denom = joint.reshape(len(self.pair_users), -1).sum(axis=1)
        bad = np.flatnonzero(denom <= 0.0)
        if len(bad):
            raise NumericError(f"all-zero posterior for pair {int(bad[0])}")
        return joint / denom[:, None, None, None, None, None]

    def m_step(self, resp):
        ky, kx = self.sizes
        n_pairs = len(self.pair_users)

        marg_y = resp.sum(axis=(2, 3, 4, 5))                 # (P, K_y)
        user_counts = np.zeros((self.n_users, ky))
        np.add.at(user_counts, self.pair_users, marg_y)

        slot_a = resp.sum(axis=(3, 5))                       # (P, K_y, K_x, 2)
        slot_b = resp.sum(axis=(2, 4))                       # (P, K_y, K_x, 2)
        marg_a = slot_a.sum(axis=(1, 3))                     # (P, K_x)
        marg_b = slot_b.sum(axis=(1, 3))
        item_counts = np.zeros((self.n_items, kx))
        np.add.at(item_counts, self.pair_a, marg_a)
        np.add.at(item_counts, self.pair_b, marg_b)

        attrib = slot_a.sum(axis=0) + slot_b.sum(axis=0)     # (K_y, K_x, 2)
        total = attrib.sum(axis=2)
        ones = attrib[:, :, 1]
        zero = total == 0.0
        if zero.any():
            log.warning("propensity: %d zero-attribution cells reset to 0.5", int(zero.sum()))
        propensity = np.where(zero, 0.5, ones / np.where(zero, 1.0, total)).T  # (K_x, K_y)

        self.params = OrderingParams(
            user_class_prior=marg_y.sum(axis=0) / n_pairs,
            user_given_class=normalize_distribution(user_counts.T, label="user_given_class"),
            item_class_prior=item_counts.sum(axis=0) / (2.0 * n_pairs),
            item_given_class=normalize_distribution(item_counts.T, label="item_given_class"),
            propensity=propensity,
        )

    def pair_likelihoods(self):
        uy, ta, tb, bern, match = self._factors()
        return np.einsum("yi,ai,bi,uay,vby,iuv->i", uy, ta, tb, bern, bern, match)

    def log_likelihood(self):
        with np.errstate(divide="ignore"):
            return float(np.log(self.pair_likelihoods()).sum())


def train(table, n_user_classes=3, n_item_classes=5, max_pairs_per_user=None,
          schedule=None, criterion=None, seed=0):
    """Fit the ordering model on all rated-item pairs of a table."""
    pairs = extract_pairs(table, max_pairs_per_user=max_pairs_per_user, seed=seed)
    model = OrderingModel(pairs, table.num_users, table.num_items,
                          n_user_classes=n_user_classes, n_item_classes=n_item_classes)
    trace = run_em(model, schedule=schedule, criterion=criterion, seed=seed)
    return model.params, trace


def fold_in(params, pairs, criterion=None):
    """Estimate a test user's class-mixture weights from their rated pairs.

    Only the mixture weights move; every global table stays fixed.
    """
    if not pairs:
        raise FoldInError("fold-in requires at least one rated pair")
    criterion = criterion or ConvergenceCriterion()
    criterion.validate()
    ky = params.n_user_classes
    a_items = np.array([p.item_a for p in pairs], dtype=np.int64)
    b_items = np.array([p.item_b for p in pairs], dtype=np.int64)
    orders = np.array([p.order for p in pairs], dtype=np.int64)
    ta = (params.item_class_prior[:, None] * params.item_given_class)[:, a_items]
    tb = (params.item_class_prior[:, None] * params.item_given_class)[:, b_items]
    bern = params._bern()
    match = _ORDER_BITS[orders]
    weights = np.full(ky, 1.0 / ky)
    prev = None
    for _ in range(criterion.max_iters):
        joint = np.einsum("y,ai,bi,uay,vby,iuv->iyabuv", weights, ta, tb, bern, bern, match)
        denom = joint.reshape(len(pairs), -1).sum(axis=1)
        if (denom <= 0.0).any():
            raise NumericError("all-zero fold-in posterior for a pair")
        resp = joint / denom[:, None, None, None, None, None]
        weights = resp.sum(axis=(2, 3, 4, 5)).mean(axis=0)
        ll = float(np.log(denom).sum())
        if prev is not None and abs(ll - prev) / max(1.0, abs(prev)) < criterion.rel_loglik_tol:
            break
        prev = ll
    return weights


def predict_rating(params, profile, observed_items, observed_ratings, item, scale):
    """Most consistent rating for a new item given a user's rated items.

    Scores every candidate rating in 1..scale by the product (in log space)
    of the pair joints between the new item and each observed item, with the
    candidate determining the order. Near-ties (relative difference below
    1e-12) go to the candidate closest to the observed mean, then to the
    lower rating.
    """
    observed_items = np.asarray(observed_items, dtype=np.int64)
    observed_ratings = np.asarray(observed_ratings, dtype=np.int64)
    if len(observed_items) == 0:
        raise ValidationError("prediction requires at least one observed rating")
    if item < 0 or item >= params.n_items:
        raise IndexError(f"item {item} out of range")
    if scale < 1 or observed_ratings.max() > scale:
        raise ValidationError("observed ratings exceed the declared scale")

    target_term = params.item_class_prior * params.item_given_class[:, item]
    obs_term = (params.item_class_prior[:, None] * params.item_given_class)[:, observed_items]
    per_order = np.einsum("a,bj,oaby,y->jo", target_term, obs_term,
                          _order_table(params), np.asarray(profile))
    with np.errstate(divide="ignore"):
        log_per_order = np.log(per_order)                    # (n_obs, 3)

    candidates = np.arange(1, scale + 1)
    orders = np.empty((len(candidates), len(observed_items)), dtype=np.int64)
    for ci, cand in enumerate(candidates):
        for j, r in enumerate(observed_ratings):
            orders[ci, j] = rating_order(int(cand), int(r))
    scores = log_per_order[np.arange(len(observed_items)), orders].sum(axis=1)

    best = scores.max()
    if np.isneginf(best):
        tied = np.ones(len(candidates), dtype=bool)
    else:
        tied = scores >= best - 1e-12
    mean_obs = float(observed_ratings.mean())
    ranked = sorted(candidates[tied], key=lambda r: (abs(r - mean_obs), r))
    return int(ranked[0])
