import io

import numpy as np
import pytest

from folkrec.dataset import (
    RawAssignment,
    build_folksonomy,
    compute_stats,
    filter_tags,
    parse_assignments,
    read_manifest,
    sparsity_value,
    split_interactions,
    write_manifest,
)
from folkrec.errors import DataError, ParseError

from synth import clustered_assignments


def _stream(*lines: str) -> io.StringIO:
    return io.StringIO("\n".join(lines) + "\n")


class TestParseAssignments:
    def test_extracts_first_three_columns(self):
        records = parse_assignments(_stream("userID\titemID\ttagID\ttimestamp", "8\t51\t13\t1234567"))
        assert records == [RawAssignment(8, 51, 13)]

    def test_header_only_gives_empty_list(self):
        assert parse_assignments(_stream("userID\titemID\ttagID")) == []

    def test_non_integer_reports_line_number(self):
        with pytest.raises(ParseError) as excinfo:
            parse_assignments(_stream("userID\titemID\ttagID", "8\tfoo\t13"))
        assert excinfo.value.line_number == 2

    def test_too_few_columns(self):
        with pytest.raises(ParseError):
            parse_assignments(_stream("h", "8\t51"))

    def test_negative_id_rejected(self):
        with pytest.raises(ParseError):
            parse_assignments(_stream("h", "8\t-3\t13"))

    def test_crlf_line_endings(self):
        records = parse_assignments(io.StringIO("h1\th2\th3\r\n1\t2\t3\r\n"))
        assert records == [RawAssignment(1, 2, 3)]

    def test_duplicates_preserved(self):
        records = parse_assignments(_stream("h", "1\t2\t3", "1\t2\t3"))
        assert len(records) == 2


class TestFilterTags:
    def test_below_threshold_removed(self):
        records = [RawAssignment(u, u, 7) for u in range(4)]
        assert filter_tags(records, 5) == []

    def test_min_count_one_is_identity(self):
        records = [RawAssignment(1, 2, 3), RawAssignment(4, 5, 6)]
        assert filter_tags(records, 1) == records

    def test_mixed_counts(self):
        # tag 7 appears 5 times, tag 9 four times: only tag-7 records survive
        records = [RawAssignment(i, i, 7) for i in range(5)] + [RawAssignment(i, i, 9) for i in range(4)]
        kept = filter_tags(records, 5)
        assert kept == [r for r in records if r.tag_id == 7]

    def test_counts_raw_occurrences_not_unique(self):
        # the same (u, i, t) line repeated counts every occurrence
        records = [RawAssignment(1, 1, 7)] * 5
        assert filter_tags(records, 5) == records

    def test_order_preserved(self):
        records = [RawAssignment(1, 1, 7), RawAssignment(2, 2, 9), RawAssignment(3, 3, 7)]
        assert filter_tags(records, 2) == [records[0], records[2]]

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        records = [
            RawAssignment(int(u), int(i), int(t))
            for u, i, t in zip(rng.integers(0, 20, 300), rng.integers(0, 20, 300), rng.integers(0, 10, 300))
        ]
        once = filter_tags(records, 4)
        assert filter_tags(once, 4) == once

    def test_min_count_must_be_positive(self):
        with pytest.raises(ValueError):
            filter_tags([], 0)


class TestBuildFolksonomy:
    def test_duplicate_triples_collapse(self):
        f = build_folksonomy([RawAssignment(1, 2, 3), RawAssignment(1, 2, 3)])
        assert f.n_assignments == 1

    def test_dense_reindex_first_appearance(self):
        f = build_folksonomy([RawAssignment(100, 7, 1), RawAssignment(200, 7, 1)])
        assert f.id_map.user_forward == {100: 0, 200: 1}
        assert list(f.id_map.user_ids) == [100, 200]

    def test_counts_and_orphan_free(self):
        records = clustered_assignments()
        f = build_folksonomy(records)
        assert (f.n_users, f.n_items, f.n_tags) == (200, 400, 40)
        assert set(np.unique(f.triples[:, 0])) == set(range(f.n_users))
        assert set(np.unique(f.triples[:, 1])) == set(range(f.n_tags))
        assert set(np.unique(f.triples[:, 2])) == set(range(f.n_items))

    def test_indices_in_range(self):
        f = build_folksonomy(clustered_assignments())
        assert f.triples[:, 0].max() < f.n_users
        assert f.triples[:, 1].max() < f.n_tags
        assert f.triples[:, 2].max() < f.n_items

    def test_empty_input_is_error(self):
        with pytest.raises(DataError, match="empty folksonomy"):
            build_folksonomy([])


class TestStats:
    def test_fully_dense_is_zero(self):
        f = build_folksonomy([RawAssignment(1, 1, 1)])
        assert compute_stats(f).sparsity == 0.0

    @pytest.mark.parametrize(
        "n_users,n_items,n_assignments,expected",
        [
            (1808, 12212, 175641, "99.20%"),
            (1651, 5381, 36728, "99.59%"),
            (1843, 65877, 330744, "99.73%"),
        ],
    )
    def test_formula_matches_published_dataset_tables(self, n_users, n_items, n_assignments, expected):
        assert f"{sparsity_value(n_users, n_items, n_assignments):.2%}" == expected

    def test_counts_copied(self):
        f = build_folksonomy(clustered_assignments())
        stats = compute_stats(f)
        assert (stats.n_users, stats.n_items, stats.n_tags) == (200, 400, 40)
        assert stats.n_assignments == f.n_assignments


def _user_pairs(pairs: np.ndarray, user: int) -> set[tuple[int, int]]:
    return {(int(u), int(i)) for u, i in pairs if u == user}


class TestSplit:
    def test_five_pairs_split_3_1_1(self):
        records = [RawAssignment(0, item, item) for item in range(5)]
        split = split_interactions(build_folksonomy(records), seed=0)
        assert split.train_pairs.shape[0] == 3
        assert split.validation_pairs.shape[0] == 1
        assert split.test_pairs.shape[0] == 1

    def test_single_pair_goes_to_train(self):
        records = [RawAssignment(0, 1, 1)]
        split = split_interactions(build_folksonomy(records), seed=0)
        assert split.train_pairs.shape[0] == 1
        assert split.validation_pairs.shape[0] == 0
        assert split.test_pairs.shape[0] == 0

    def test_deterministic_under_seed(self):
        f = build_folksonomy(clustered_assignments())
        a = split_interactions(f, seed=5)
        b = split_interactions(f, seed=5)
        assert np.array_equal(a.train_pairs, b.train_pairs)
        assert np.array_equal(a.validation, b.validation)
        assert np.array_equal(a.test, b.test)

    def test_different_seed_differs(self):
        f = build_folksonomy(clustered_assignments())
        a = split_interactions(f, seed=5)
        b = split_interactions(f, seed=6)
        assert not np.array_equal(a.train_pairs, b.train_pairs)

    def test_pairs_partition(self):
        f = build_folksonomy(clustered_assignments())
        split = split_interactions(f, seed=5)
        all_codes = np.unique(f.triples[:, 0] * f.n_items + f.triples[:, 2])
        split_codes = np.concatenate([
            pairs[:, 0] * f.n_items + pairs[:, 1]
            for pairs in (split.train_pairs, split.validation_pairs, split.test_pairs)
        ])
        assert split_codes.shape[0] == all_codes.shape[0]
        assert np.array_equal(np.sort(split_codes), all_codes)

    def test_every_user_has_training_pair(self):
        f = build_folksonomy(clustered_assignments())
        split = split_interactions(f, seed=5)
        assert set(np.unique(split.train_pairs[:, 0])) == set(range(f.n_users))

    def test_triples_travel_with_their_pair(self):
        f = build_folksonomy(clustered_assignments())
        split = split_interactions(f, seed=5)
        train_codes = set(
            (split.train_pairs[:, 0] * f.n_items + split.train_pairs[:, 1]).tolist()
        )
        for u, _, i in split.train:
            assert int(u) * f.n_items + int(i) in train_codes
        for u, _, i in split.validation:
            assert int(u) * f.n_items + int(i) not in train_codes

    def test_ratio_validation(self):
        f = build_folksonomy([RawAssignment(0, 1, 1)])
        with pytest.raises(ValueError):
            split_interactions(f, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError):
            split_interactions(f, (1.0, 0.0, 0.0), seed=0)


class TestManifest:
    def test_round_trip_bit_exact(self):
        f = build_folksonomy(clustered_assignments())
        split = split_interactions(f, seed=5)
        first = io.StringIO()
        write_manifest(split, first)
        reloaded = read_manifest(io.StringIO(first.getvalue()))
        assert np.array_equal(reloaded.train_pairs, split.train_pairs)
        assert np.array_equal(reloaded.validation_pairs, split.validation_pairs)
        assert np.array_equal(reloaded.test_pairs, split.test_pairs)

    def test_line_format(self):
        f = build_folksonomy([RawAssignment(0, 1, 1), RawAssignment(0, 2, 1)])
        split = split_interactions(f, seed=0)
        out = io.StringIO()
        write_manifest(split, out)
        for line in out.getvalue().splitlines():
            name, user, item = line.split("\t")
            assert name in ("train", "validation", "test")
            int(user), int(item)

    def test_bad_line_rejected(self):
        with pytest.raises(ParseError):
            read_manifest(io.StringIO("train\t1\n"))
        with pytest.raises(ParseError):
            read_manifest(io.StringIO("holdout\t1\t2\n"))
