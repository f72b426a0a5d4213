import numpy as np
import pytest

from prefcf.data import (
    FIRST_IN_FILE,
    SEEDED_RANDOM,
    RatingTable,
    SplitProtocol,
    load_dataset,
    split,
    write_canonical,
)
from prefcf.errors import ParseError, ValidationError

from conftest import make_random_table


class TestLoadCanonical:
    def test_three_line_file(self, tmp_path):
        """Labels compact in first-appearance order; counts read back directly."""
        path = tmp_path / "r.tsv"
        path.write_text("u1\ti1\t4\nu1\ti2\t2\nu2\ti1\t5\n")
        table = load_dataset(path, scale=5)
        assert (table.num_users, table.num_items, len(table)) == (2, 2, 3)
        assert list(table.triples()) == [(0, 0, 4), (0, 1, 2), (1, 0, 5)]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        table = load_dataset(path)
        assert (table.num_users, table.num_items, len(table)) == (0, 0, 0)

    def test_scale_inferred_from_max(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("a\tx\t3\nb\ty\t4\n")
        assert load_dataset(path).scale == 4

    def test_comments_skipped(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("# a comment\nu\ti\t3\n\n")
        assert len(load_dataset(path, scale=5)) == 1

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("u\ti\t3\nu\ti\n")
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(path)

    def test_non_integer_rating(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("u\ti\t3.5\n")
        with pytest.raises(ParseError, match="line 1"):
            load_dataset(path)

    def test_rating_out_of_scale(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("u\ti\t7\n")
        with pytest.raises(ValidationError, match="outside 1..5"):
            load_dataset(path, scale=5)

    def test_duplicate_pair_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("u\ti\t3\nu\ti\t4\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_dataset(path)


class TestLoadMovielens:
    def test_sample_row(self, tmp_path):
        """The 4th (timestamp) column is dropped; ids compacted."""
        path = tmp_path / "u.data"
        path.write_text("196\t242\t3\t881250949\n")
        table = load_dataset(path, "movielens-100k")
        assert list(table.triples()) == [(0, 0, 3)]

    def test_ten_row_cross_check(self, tmp_path):
        """Converter output agrees with an independent hand parse of 10 rows."""
        rng = np.random.default_rng(5)
        rows = []
        for _ in range(10):
            rows.append((int(rng.integers(1, 900)), int(rng.integers(1, 1600)),
                         int(rng.integers(1, 6)), int(rng.integers(8e8, 9e8))))
        # one duplicate-free sample
        rows = list(dict.fromkeys((u, i) for u, i, _, _ in rows))
        rows = [(u, i, int(rng.integers(1, 6)), 881250000 + k) for k, (u, i) in enumerate(rows)]
        path = tmp_path / "u.data"
        path.write_text("".join(f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in rows))
        table = load_dataset(path, "movielens-100k", scale=5)

        users, items = {}, {}
        expected = []
        for u, i, r, _ in rows:
            expected.append((users.setdefault(u, len(users)),
                             items.setdefault(i, len(items)), r))
        assert list(table.triples()) == expected

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_text("196\t242\t3\n")
        with pytest.raises(ParseError, match="line 1"):
            load_dataset(path, "movielens-100k")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValidationError):
            load_dataset(tmp_path / "x", "netflix")


class TestRoundTrip:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_write_then_load_is_identity(self, tmp_path, seed):
        table = make_random_table(seed, n_users=12, n_items=9, per_user=5)
        path = tmp_path / "out.tsv"
        write_canonical(table, path)
        assert load_dataset(path) == table

    def test_round_trip_preserves_unusual_id_order(self, tmp_path):
        """Ids not in first-appearance order survive via the metadata header."""
        table = RatingTable.from_triples(
            [(2, 3, 1), (0, 1, 5), (1, 0, 2)], num_users=4, num_items=5, scale=5)
        path = tmp_path / "out.tsv"
        write_canonical(table, path)
        assert load_dataset(path) == table


class TestSplit:
    def test_train_and_test_counts(self):
        """First users train; the rest test, minus those with too few ratings."""
        table = make_random_table(1, n_users=500, n_items=60, per_user=8)
        result = split(table, SplitProtocol(200, 5))
        assert result.train.num_users == 200
        train_users = np.unique(result.train.users)
        assert len(train_users) == 200 and train_users.max() == 199
        test_users = np.unique(result.test_observed.users)
        assert len(test_users) <= 300
        assert test_users.min() >= 200

    def test_user_with_exactly_given_count_dropped(self):
        table = RatingTable.from_triples(
            [(0, 0, 3), (1, 0, 2), (1, 1, 4), (1, 2, 5), (2, 0, 1), (2, 1, 2)],
            num_users=3, num_items=3, scale=5)
        result = split(table, SplitProtocol(1, 2))
        # user 2 has exactly 2 ratings: nothing to hold out
        assert 2 not in result.test_observed.users
        assert 2 not in result.test_heldout.users
        assert set(result.test_observed.users) == {1}

    def test_given_counts_respected(self):
        table = make_random_table(2, n_users=20, n_items=15, per_user=7)
        result = split(table, SplitProtocol(10, 3))
        for user in np.unique(result.test_observed.users):
            assert len(result.test_observed.user_items(user)) == 3
            assert len(result.test_heldout.user_items(user)) == 4

    def test_first_in_file_takes_earliest(self):
        table = RatingTable.from_triples(
            [(0, 0, 1), (1, 5, 2), (1, 3, 3), (1, 1, 4)],
            num_users=2, num_items=6, scale=5)
        result = split(table, SplitProtocol(1, 2, FIRST_IN_FILE))
        assert list(result.test_observed.user_items(1)) == [5, 3]
        assert list(result.test_heldout.user_items(1)) == [1]

    def test_seeded_random_is_deterministic(self):
        table = make_random_table(3, n_users=30, n_items=20, per_user=9)
        a = split(table, SplitProtocol(10, 4, SEEDED_RANDOM, seed=42))
        b = split(table, SplitProtocol(10, 4, SEEDED_RANDOM, seed=42))
        assert a.train == b.train
        assert a.test_observed == b.test_observed
        assert a.test_heldout == b.test_heldout

    @pytest.mark.parametrize("selection", [FIRST_IN_FILE, SEEDED_RANDOM])
    def test_partition_of_retained_users(self, selection):
        """Train + observed + heldout triples partition the retained users' triples."""
        table = make_random_table(4, n_users=25, n_items=18, per_user=6)
        result = split(table, SplitProtocol(10, 3, selection, seed=7))
        combined = set()
        for part in (result.train, result.test_observed, result.test_heldout):
            part_triples = set(part.triples())
            assert not combined & part_triples
            combined |= part_triples
        original = set(table.triples())
        assert combined <= original
        assert combined == {t for t in original if len(table.user_items(t.user)) > 3
                            or t.user < 10}

    def test_train_count_too_large(self):
        table = make_random_table(5, n_users=5)
        with pytest.raises(ValidationError):
            split(table, SplitProtocol(5, 2))


class TestUserMean:
    def test_two_ratings(self):
        table = RatingTable.from_triples([(0, 0, 2), (0, 1, 4)], scale=5)
        assert table.user_mean(0) == 3.0

    def test_singleton(self):
        table = RatingTable.from_triples([(0, 0, 5)], scale=5)
        assert table.user_mean(0) == 5.0

    def test_four_ratings(self):
        table = RatingTable.from_triples(
            [(0, i, r) for i, r in enumerate([1, 1, 1, 4])], scale=5)
        assert table.user_mean(0) == 1.75

    def test_zero_ratings_error(self):
        table = RatingTable.from_triples([(0, 0, 3)], num_users=2, num_items=1, scale=5)
        with pytest.raises(ValidationError, match="no ratings"):
            table.user_mean(1)

    @pytest.mark.parametrize("seed", range(4))
    def test_mean_within_scale(self, seed):
        table = make_random_table(seed)
        for user in range(table.num_users):
            assert 1.0 <= table.user_mean(user) <= table.scale


class TestRatingTable:
    def test_indexes_agree_with_triples(self):
        table = make_random_table(6)
        for user in range(table.num_users):
            expected = [(i, r) for u, i, r in table.triples() if u == user]
            got = list(zip(table.user_items(user), table.user_ratings(user)))
            assert got == expected
        total = sum(len(table.user_items(u)) for u in range(table.num_users))
        assert total == len(table)

    def test_out_of_range_ids_rejected(self):
        with pytest.raises(ValidationError):
            RatingTable([0], [3], [2], num_users=1, num_items=2, scale=5)

    def test_arrays_read_only(self):
        table = make_random_table(7)
        with pytest.raises(ValueError):
            table.ratings[0] = 1
