"""Sparse rating tables: loading, validation, indexing, and train/test splitting.

A :class:`RatingTable` stores (user, item, rating) triples with contiguous
integer ids and integer ratings in ``1..scale``. Insertion order is preserved
and significant (the "first ratings" of a user are the earliest in the file).
Tables are immutable once built and safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParseError, ValidationError

FIRST_IN_FILE = "first-in-file"
SEEDED_RANDOM = "seeded-random"

_META_RE = re.compile(r"#\s*users=(\d+)\s+items=(\d+)\s+scale=(\d+)\s*$")


class RatingTriple(NamedTuple):
    user: int
    item: int
    rating: int


class RatingTable:
    """Immutable collection of rating triples with per-user and per-item indexes."""

    def __init__(self, users, items, ratings, num_users, num_items, scale):
        users = np.ascontiguousarray(users, dtype=np.int64)
        items = np.ascontiguousarray(items, dtype=np.int64)
        ratings = np.ascontiguousarray(ratings, dtype=np.int64)
        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise ValidationError("users, items, and ratings must be equal-length 1-d arrays")
        if num_users < 0 or num_items < 0 or scale < 0:
            raise ValidationError("num_users, num_items, and scale must be non-negative")
        if len(users):
            if users.min() < 0 or users.max() >= num_users:
                raise ValidationError(f"user id out of range 0..{num_users - 1}")
            if items.min() < 0 or items.max() >= num_items:
                raise ValidationError(f"item id out of range 0..{num_items - 1}")
            if ratings.min() < 1 or ratings.max() > scale:
                raise ValidationError(f"rating outside 1..{scale}")
            keys = users * num_items + items
            if len(np.unique(keys)) != len(keys):
                dup = _first_duplicate(users, items)
                raise ValidationError(f"duplicate rating for user {dup[0]}, item {dup[1]}")
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.scale = int(scale)
        self.users = users
        self.items = items
        self.ratings = ratings
        for arr in (self.users, self.items, self.ratings):
            arr.flags.writeable = False
        self._user_rows = _group_rows(users, self.num_users)
        self._item_rows = _group_rows(items, self.num_items)

    @classmethod
    def from_triples(cls, triples, num_users=None, num_items=None, scale=None):
        """Build a table from an iterable of (user, item, rating) tuples."""
        triples = list(triples)
        users = np.array([t[0] for t in triples], dtype=np.int64)
        items = np.array([t[1] for t in triples], dtype=np.int64)
        ratings = np.array([t[2] for t in triples], dtype=np.int64)
        if num_users is None:
            num_users = int(users.max()) + 1 if len(users) else 0
        if num_items is None:
            num_items = int(items.max()) + 1 if len(items) else 0
        if scale is None:
            scale = int(ratings.max()) if len(ratings) else 0
        return cls(users, items, ratings, num_users, num_items, scale)

    def __len__(self):
        return len(self.users)

    def __eq__(self, other):
        if not isinstance(other, RatingTable):
            return NotImplemented
        return (
            self.num_users == other.num_users
            and self.num_items == other.num_items
            and self.scale == other.scale
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
        )

    def __repr__(self):
        return (
            f"RatingTable(users={self.num_users}, items={self.num_items}, "
            f"scale={self.scale}, ratings={len(self)})"
        )

    def triples(self):
        for u, i, r in zip(self.users, self.items, self.ratings):
            yield RatingTriple(int(u), int(i), int(r))

    def user_triple_indices(self, user):
        """Indices (in insertion order) of the triples rated by ``user``."""
        return self._user_rows[self._check_user(user)]

    def user_items(self, user):
        return self.items[self.user_triple_indices(user)]

    def user_ratings(self, user):
        return self.ratings[self.user_triple_indices(user)]

    def item_triple_indices(self, item):
        if item < 0 or item >= self.num_items:
            raise IndexError(f"item {item} out of range 0..{self.num_items - 1}")
        return self._item_rows[int(item)]

    def item_raters(self, item):
        """(user ids, their ratings) for everyone who rated ``item``."""
        rows = self.item_triple_indices(item)
        return self.users[rows], self.ratings[rows]

    def user_mean(self, user):
        """Arithmetic mean of one user's ratings."""
        rows = self.user_triple_indices(user)
        if len(rows) == 0:
            raise ValidationError(f"user {user} has no ratings; mean undefined")
        return float(self.ratings[rows].mean())

    def _check_user(self, user):
        if user < 0 or user >= self.num_users:
            raise IndexError(f"user {user} out of range 0..{self.num_users - 1}")
        return int(user)


def _group_rows(keys, size):
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    bounds = np.searchsorted(sorted_keys, np.arange(size + 1))
    return [order[bounds[k]:bounds[k + 1]] for k in range(size)]


def _first_duplicate(users, items):
    seen = set()
    for u, i in zip(users, items):
        if (u, i) in seen:
            return int(u), int(i)
        seen.add((u, i))
    return -1, -1


@dataclass
class SplitProtocol:
    """How to carve a table into train users and given/heldout test ratings."""

    train_user_count: int
    given_count: int
    given_selection: str = FIRST_IN_FILE
    seed: int = 0

    def validate(self, table):
        if self.train_user_count < 1:
            raise ValidationError("train_user_count must be >= 1")
        if self.train_user_count >= table.num_users:
            raise ValidationError(
                f"train_user_count {self.train_user_count} must be < {table.num_users} users"
            )
        if self.given_count < 1:
            raise ValidationError("given_count must be >= 1")
        if self.given_selection not in (FIRST_IN_FILE, SEEDED_RANDOM):
            raise ValidationError(f"unknown given_selection {self.given_selection!r}")


@dataclass
class SplitResult:
    train: RatingTable
    test_observed: RatingTable
    test_heldout: RatingTable


def split(table, protocol):
    """Partition a table into train users and per-test-user given/heldout ratings.

    The first ``train_user_count`` users (by id) form the training table. Every
    remaining user with more than ``given_count`` ratings contributes
    ``given_count`` ratings to ``test_observed`` (first-in-file or a seeded
    random sample) and the rest to ``test_heldout``. Users with too few
    ratings are dropped entirely.
    """
    protocol.validate(table)
    n_train = protocol.train_user_count
    rng = np.random.default_rng(protocol.seed)

    train_rows = np.flatnonzero(table.users < n_train)
    observed_rows = []
    heldout_rows = []
    for user in range(n_train, table.num_users):
        rows = table.user_triple_indices(user)
        if len(rows) <= protocol.given_count:
            continue
        if protocol.given_selection == FIRST_IN_FILE:
            chosen = np.arange(protocol.given_count)
        else:
            chosen = np.sort(rng.choice(len(rows), size=protocol.given_count, replace=False))
        mask = np.zeros(len(rows), dtype=bool)
        mask[chosen] = True
        observed_rows.append(rows[mask])
        heldout_rows.append(rows[~mask])

    def subtable(rows, num_users):
        rows = np.sort(np.concatenate(rows)) if rows else np.empty(0, dtype=np.int64)
        return RatingTable(
            table.users[rows], table.items[rows], table.ratings[rows],
            num_users=num_users, num_items=table.num_items, scale=table.scale,
        )

    return SplitResult(
        train=subtable([train_rows], n_train),
        test_observed=subtable(observed_rows, table.num_users),
        test_heldout=subtable(heldout_rows, table.num_users),
    )


def load_dataset(path, fmt="canonical-tsv", scale=None):
    """Load a rating file into a compacted :class:`RatingTable`.

    ``canonical-tsv`` is user<TAB>item<TAB>rating with optional '#' comment
    lines; a comment of the form ``# users=N items=M scale=R`` declares the id
    space, in which case ids are taken verbatim. Without it, ids are compacted
    in first-appearance order. ``movielens-100k`` is the whitespace-separated
    4-column format (timestamp ignored). ``scale`` overrides any declared or
    inferred rating scale.
    """
    if fmt not in ("canonical-tsv", "movielens-100k"):
        raise ValidationError(f"unknown dataset format {fmt!r}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    declared = None
    raw = []  # (user label, item label, rating, line number)
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            if declared is None and fmt == "canonical-tsv":
                m = _META_RE.match(text)
                if m:
                    declared = tuple(int(g) for g in m.groups())
            continue
        parts = text.split()
        want = 3 if fmt == "canonical-tsv" else 4
        if len(parts) != want:
            raise ParseError(f"line {lineno}: expected {want} fields, got {len(parts)}")
        try:
            rating = int(parts[2])
        except ValueError:
            raise ParseError(f"line {lineno}: rating {parts[2]!r} is not an integer") from None
        raw.append((parts[0], parts[1], rating, lineno))

    if declared is not None:
        num_users, num_items, file_scale = declared
        users, items = [], []
        for u, i, _, lineno in raw:
            try:
                users.append(int(u))
                items.append(int(i))
            except ValueError:
                raise ParseError(f"line {lineno}: declared-id file requires integer ids") from None
    else:
        file_scale = None
        user_ids, item_ids = {}, {}
        users, items = [], []
        for u, i, _, _ in raw:
            users.append(user_ids.setdefault(u, len(user_ids)))
            items.append(item_ids.setdefault(i, len(item_ids)))
        num_users, num_items = len(user_ids), len(item_ids)

    ratings = [r for _, _, r, _ in raw]
    if scale is None:
        scale = file_scale if file_scale is not None else (max(ratings) if ratings else 0)
    for (_, _, r, lineno) in raw:
        if r < 1 or r > scale:
            raise ValidationError(f"line {lineno}: rating {r} outside 1..{scale}")
    return RatingTable(users, items, ratings, num_users, num_items, scale)


def write_canonical(table, path):
    """Write a table as canonical TSV; loading the file reproduces the table."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# users={table.num_users} items={table.num_items} scale={table.scale}\n")
        for u, i, r in zip(table.users, table.items, table.ratings):
            fh.write(f"{u}\t{i}\t{r}\n")
