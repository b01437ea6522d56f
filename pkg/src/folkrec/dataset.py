"""Assignment-file ingestion, tag filtering, dense re-indexing and splitting.

The raw input is a tab-separated file of (user, item, tag) assignment
events. The pipeline is: parse -> drop infrequent tags -> deduplicate and
re-index densely -> split unique user-item pairs 60/20/20 per user.
"""

import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import DataError, ParseError
from .seeds import substream

__all__ = [
    "RawAssignment",
    "IdMap",
    "Folksonomy",
    "SplitDataset",
    "DatasetStats",
    "parse_assignments",
    "filter_tags",
    "build_folksonomy",
    "compute_stats",
    "sparsity_value",
    "split_interactions",
    "write_manifest",
    "read_manifest",
    "ManifestSplits",
]


@dataclass(frozen=True)
class RawAssignment:
    """One tagging event as read from the source file (external ids)."""

    user_id: int
    item_id: int
    tag_id: int


@dataclass
class IdMap:
    """Bidirectional mapping between external ids and dense indices.

    ``*_forward`` maps external -> dense, the ``*_ids`` arrays map
    dense -> external. Dense indices are contiguous from 0 per entity class.
    """

    user_forward: dict[int, int]
    item_forward: dict[int, int]
    tag_forward: dict[int, int]
    user_ids: np.ndarray
    item_ids: np.ndarray
    tag_ids: np.ndarray

    @classmethod
    def from_reverse(cls, user_ids: np.ndarray, item_ids: np.ndarray, tag_ids: np.ndarray) -> "IdMap":
        return cls(
            user_forward={int(e): i for i, e in enumerate(user_ids)},
            item_forward={int(e): i for i, e in enumerate(item_ids)},
            tag_forward={int(e): i for i, e in enumerate(tag_ids)},
            user_ids=np.asarray(user_ids, dtype=np.int64),
            item_ids=np.asarray(item_ids, dtype=np.int64),
            tag_ids=np.asarray(tag_ids, dtype=np.int64),
        )


@dataclass
class Folksonomy:
    """Deduplicated assignment triples over dense indices.

    ``triples`` has shape (n, 3) with columns (user, tag, item).
    """

    n_users: int
    n_items: int
    n_tags: int
    triples: np.ndarray
    id_map: IdMap

    @property
    def n_assignments(self) -> int:
        return self.triples.shape[0]


@dataclass
class DatasetStats:
    n_users: int
    n_items: int
    n_tags: int
    n_assignments: int
    sparsity: float


@dataclass
class SplitDataset:
    """Train/validation/test triple sets over a shared index space.

    The split unit is the unique (user, item) pair: every triple carrying a
    pair lives in that pair's split. ``*_pairs`` arrays are sorted by
    (user, item); ``train_pair_codes`` is ``user * n_items + item`` sorted,
    for fast membership tests.
    """

    n_users: int
    n_items: int
    n_tags: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    train_pairs: np.ndarray
    validation_pairs: np.ndarray
    test_pairs: np.ndarray
    id_map: IdMap | None = None
    train_pair_codes: np.ndarray = field(init=False)

    def __post_init__(self):
        codes = self.train_pairs[:, 0].astype(np.int64) * self.n_items + self.train_pairs[:, 1]
        self.train_pair_codes = np.sort(codes)


def parse_assignments(source: IO[str]) -> list[RawAssignment]:
    """Parse a tab-separated assignment file into raw records.

    The first line is a header and is skipped. Every following non-empty
    line must start with three integer columns (user, item, tag); any extra
    columns are ignored. Duplicates are preserved at this stage.

    Raises ParseError with the offending 1-based line number on a
    non-integer or negative id.
    """
    records: list[RawAssignment] = []
    for line_number, line in enumerate(source, start=1):
        if line_number == 1:
            continue
        stripped = line.rstrip("\r\n")
        if not stripped:
            continue
        columns = stripped.split("\t")
        if len(columns) < 3:
            raise ParseError(line_number, f"expected at least 3 columns, got {len(columns)}")
        try:
            user, item, tag = int(columns[0]), int(columns[1]), int(columns[2])
        except ValueError:
            raise ParseError(line_number, f"non-integer id in {columns[:3]!r}") from None
        if user < 0 or item < 0 or tag < 0:
            raise ParseError(line_number, "negative id")
        records.append(RawAssignment(user, item, tag))
    return records


def filter_tags(records: list[RawAssignment], min_count: int) -> list[RawAssignment]:
    """Keep only records whose tag occurs at least ``min_count`` times.

    Occurrences are counted over the raw record list, before any
    deduplication. Relative order is preserved.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[int, int] = {}
    for record in records:
        counts[record.tag_id] = counts.get(record.tag_id, 0) + 1
    return [r for r in records if counts[r.tag_id] >= min_count]


def build_folksonomy(records: Iterable[RawAssignment]) -> Folksonomy:
    """Deduplicate triples and re-index entities densely.

    Dense ids are assigned in order of first appearance in the record
    stream, so the result is reproducible for a fixed input order.
    """
    user_forward: dict[int, int] = {}
    item_forward: dict[int, int] = {}
    tag_forward: dict[int, int] = {}
    seen: set[tuple[int, int, int]] = set()
    triples: list[tuple[int, int, int]] = []
    for record in records:
        user = user_forward.setdefault(record.user_id, len(user_forward))
        item = item_forward.setdefault(record.item_id, len(item_forward))
        tag = tag_forward.setdefault(record.tag_id, len(tag_forward))
        triple = (user, tag, item)
        if triple not in seen:
            seen.add(triple)
            triples.append(triple)
    if not triples:
        raise DataError("empty folksonomy")
    id_map = IdMap(
        user_forward=user_forward,
        item_forward=item_forward,
        tag_forward=tag_forward,
        user_ids=np.fromiter(user_forward.keys(), dtype=np.int64, count=len(user_forward)),
        item_ids=np.fromiter(item_forward.keys(), dtype=np.int64, count=len(item_forward)),
        tag_ids=np.fromiter(tag_forward.keys(), dtype=np.int64, count=len(tag_forward)),
    )
    return Folksonomy(
        n_users=len(user_forward),
        n_items=len(item_forward),
        n_tags=len(tag_forward),
        triples=np.asarray(triples, dtype=np.int64),
        id_map=id_map,
    )


def sparsity_value(n_users: int, n_items: int, n_assignments: int) -> float:
    """Fraction of the user-item grid not covered by assignments."""
    return 1.0 - n_assignments / (n_users * n_items)


def compute_stats(folksonomy: Folksonomy) -> DatasetStats:
    return DatasetStats(
        n_users=folksonomy.n_users,
        n_items=folksonomy.n_items,
        n_tags=folksonomy.n_tags,
        n_assignments=folksonomy.n_assignments,
        sparsity=sparsity_value(folksonomy.n_users, folksonomy.n_items, folksonomy.n_assignments),
    )


def split_interactions(
    folksonomy: Folksonomy,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SplitDataset:
    """Split unique (user, item) pairs per user into train/validation/test.

    For each user the pairs are shuffled under the seed's "split"
    substream and cut: ceil(r_train * n) pairs (at least one) go to train;
    the remainder is divided between validation and test in proportion
    r_val : r_test, validation receiving the floor. Every triple travels
    with its pair. Deterministic for a fixed (folksonomy, seed).
    """
    r_train, r_val, r_test = ratios
    if not (r_train > 0 and r_val > 0 and r_test > 0):
        raise ValueError("all split ratios must be positive")
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")

    triples = folksonomy.triples
    n_items = folksonomy.n_items
    pair_codes = triples[:, 0] * n_items + triples[:, 2]
    unique_codes = np.unique(pair_codes)
    pair_users = unique_codes // n_items
    pair_items = unique_codes % n_items

    rng = substream(seed, "split")
    # 0 = train, 1 = validation, 2 = test, per unique pair
    assignment = np.empty(unique_codes.shape[0], dtype=np.int8)
    user_starts = np.searchsorted(pair_users, np.arange(folksonomy.n_users + 1))
    for user in range(folksonomy.n_users):
        lo, hi = user_starts[user], user_starts[user + 1]
        count = hi - lo
        if count == 0:
            continue
        order = rng.permutation(count)
        n_train = max(1, math.ceil(r_train * count))
        n_train = min(n_train, count)
        remainder = count - n_train
        n_val = math.floor(remainder * (r_val / (r_val + r_test)))
        labels = np.full(count, 2, dtype=np.int8)
        labels[order[:n_train]] = 0
        labels[order[n_train:n_train + n_val]] = 1
        assignment[lo:hi] = labels

    triple_split = assignment[np.searchsorted(unique_codes, pair_codes)]

    def pairs_of(label: int) -> np.ndarray:
        mask = assignment == label
        return np.column_stack([pair_users[mask], pair_items[mask]]).astype(np.int64)

    return SplitDataset(
        n_users=folksonomy.n_users,
        n_items=folksonomy.n_items,
        n_tags=folksonomy.n_tags,
        train=triples[triple_split == 0],
        validation=triples[triple_split == 1],
        test=triples[triple_split == 2],
        train_pairs=pairs_of(0),
        validation_pairs=pairs_of(1),
        test_pairs=pairs_of(2),
        id_map=folksonomy.id_map,
    )


_SPLIT_NAMES = ("train", "validation", "test")


def write_manifest(split: SplitDataset, stream: IO[str]) -> None:
    """Freeze a split as `split_name<TAB>user<TAB>item` lines (dense ids)."""
    for name, pairs in zip(_SPLIT_NAMES, (split.train_pairs, split.validation_pairs, split.test_pairs)):
        for user, item in pairs:
            stream.write(f"{name}\t{user}\t{item}\n")


@dataclass
class ManifestSplits:
    """Pair-level view of a frozen split, enough to evaluate or recommend."""

    train_pairs: np.ndarray
    validation_pairs: np.ndarray
    test_pairs: np.ndarray
    n_users: int = 0
    n_items: int = 0
    train_pair_codes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n_users == 0:
            for pairs in (self.train_pairs, self.validation_pairs, self.test_pairs):
                if pairs.size:
                    self.n_users = max(self.n_users, int(pairs[:, 0].max()) + 1)
                    self.n_items = max(self.n_items, int(pairs[:, 1].max()) + 1)
        codes = self.train_pairs[:, 0].astype(np.int64) * max(self.n_items, 1) + self.train_pairs[:, 1]
        self.train_pair_codes = np.sort(codes)


def read_manifest(stream: IO[str]) -> ManifestSplits:
    """Reload a manifest written by :func:`write_manifest`."""
    buckets: dict[str, list[tuple[int, int]]] = {name: [] for name in _SPLIT_NAMES}
    for line_number, line in enumerate(stream, start=1):
        stripped = line.rstrip("\r\n")
        if not stripped:
            continue
        parts = stripped.split("\t")
        if len(parts) != 3 or parts[0] not in buckets:
            raise ParseError(line_number, f"bad manifest line {stripped!r}")
        try:
            buckets[parts[0]].append((int(parts[1]), int(parts[2])))
        except ValueError:
            raise ParseError(line_number, f"non-integer id in {stripped!r}") from None

    def as_array(name: str) -> np.ndarray:
        rows = buckets[name]
        if not rows:
            return np.empty((0, 2), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    return ManifestSplits(
        train_pairs=as_array("train"),
        validation_pairs=as_array("validation"),
        test_pairs=as_array("test"),
    )
