import numpy as np
import pytest

from prefcf.data import RatingTable


def make_random_table(seed, n_users=10, n_items=8, per_user=4, scale=5):
    """A small rating table with per-user random items and ratings."""
    rng = np.random.default_rng(seed)
    triples = []
    for user in range(n_users):
        items = rng.choice(n_items, size=per_user, replace=False)
        for item in items:
            triples.append((user, int(item), int(rng.integers(1, scale + 1))))
    return RatingTable.from_triples(triples, num_users=n_users, num_items=n_items, scale=scale)


@pytest.fixture
def random_table():
    return make_random_table
