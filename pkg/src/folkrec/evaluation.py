"""Full-ranking top-K generation and ranking metrics.

Every user with at least one held-out interaction is scored against all
items (minus their training items), and Recall/Precision/Hit/NDCG/MRR are
averaged over those users at each cutoff.

The NDCG here normalizes by the sum of discounts over all N positions,
not by the ideal DCG capped at the truth size; ``standard_ndcg`` switches
to the conventional capped form for comparison against other toolkits.
"""

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import DataError
from .model import FinalEmbeddings

__all__ = [
    "EvalConfig",
    "MetricReport",
    "top_k",
    "recall_at",
    "precision_at",
    "hit_at",
    "ndcg_at",
    "mrr_at",
    "evaluate",
    "format_report",
    "write_report_records",
]

DEFAULT_CUTOFFS = (5, 10, 15, 20, 25, 30)
METRIC_NAMES = ("recall", "precision", "hit", "ndcg", "mrr")

_USER_BLOCK = 128  # users scored per dense block; bounds peak memory


@dataclass
class EvalConfig:
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS
    exclude_train: bool = True
    standard_ndcg: bool = False

    def __post_init__(self):
        self.cutoffs = tuple(int(n) for n in self.cutoffs)
        if not self.cutoffs or any(n < 1 for n in self.cutoffs):
            raise ValueError("cutoffs must be positive")
        if list(self.cutoffs) != sorted(self.cutoffs):
            raise ValueError("cutoffs must be sorted ascending")


@dataclass
class MetricReport:
    """Mean metric per cutoff over evaluated users."""

    split: str
    cutoffs: tuple[int, ...]
    recall: dict[int, float]
    precision: dict[int, float]
    hit: dict[int, float]
    ndcg: dict[int, float]
    mrr: dict[int, float]
    n_users_evaluated: int

    def value(self, metric: str, cutoff: int) -> float:
        return getattr(self, metric)[cutoff]


def top_k(u: int, finals: FinalEmbeddings, n: int, exclusions: Iterable[int] = ()) -> np.ndarray:
    """Indices of the ``n`` best-scoring items for user ``u``.

    Excluded items never appear. Ties break toward the smaller item index;
    if fewer than ``n`` candidates exist, all of them are returned.
    """
    scores = finals.item @ finals.user[u]
    return _rank_row(scores, np.fromiter(exclusions, dtype=np.int64), n)


def _rank_row(scores: np.ndarray, excluded: np.ndarray, n: int) -> np.ndarray:
    scores = scores.astype(np.float64, copy=True)
    n_candidates = scores.shape[0] - excluded.shape[0]
    if excluded.size:
        scores[excluded] = -np.inf
    order = np.argsort(-scores, kind="stable")
    return order[: max(0, min(n, n_candidates))]


def _hits(recs: Sequence[int], truth: set[int], n: int) -> list[bool]:
    return [r in truth for r in list(recs)[:n]]


def recall_at(recs: Sequence[int], truth: set[int], n: int) -> float:
    """Fraction of the truth set retrieved in the top ``n``."""
    return sum(_hits(recs, truth, n)) / len(truth)


def precision_at(recs: Sequence[int], truth: set[int], n: int) -> float:
    """Fraction of the ``n`` slots that hit; the denominator stays ``n``
    even when fewer candidates exist."""
    return sum(_hits(recs, truth, n)) / n


def hit_at(recs: Sequence[int], truth: set[int], n: int) -> int:
    """1 if any of the top ``n`` is relevant, else 0."""
    return 1 if any(_hits(recs, truth, n)) else 0


def ndcg_at(recs: Sequence[int], truth: set[int], n: int, standard: bool = False) -> float:
    """Position-discounted hit quality in [0, 1].

    Default: sum of 1/log(pos+1) over hit positions, divided by the same
    sum over all ``n`` positions. With ``standard=True`` the denominator is
    instead the ideal DCG, capped at min(n, |truth|).
    """
    hits = _hits(recs, truth, n)
    numerator = sum(1.0 / math.log(pos + 2) for pos, h in enumerate(hits) if h)
    if standard:
        ideal = min(n, len(truth))
        denominator = sum(1.0 / math.log(pos + 2) for pos in range(ideal))
    else:
        denominator = sum(1.0 / math.log(pos + 2) for pos in range(n))
    return numerator / denominator


def mrr_at(recs: Sequence[int], truth: set[int], n: int) -> float:
    """Reciprocal rank of the first hit within the cutoff, 0 if none."""
    for pos, h in enumerate(_hits(recs, truth, n)):
        if h:
            return 1.0 / (pos + 1)
    return 0.0


def _pairs_by_user(pairs: np.ndarray, n_users: int) -> tuple[np.ndarray, np.ndarray]:
    """Sort pair rows by user and return (items_sorted_by_user, user_indptr)."""
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    users = pairs[order, 0]
    items = pairs[order, 1]
    indptr = np.searchsorted(users, np.arange(n_users + 1))
    return items, indptr


def evaluate(finals: FinalEmbeddings, which: str, data, cfg: EvalConfig | None = None) -> MetricReport:
    """Score every evaluable user and average the five metrics per cutoff.

    ``data`` needs ``validation_pairs``/``test_pairs``/``train_pairs``
    arrays plus ``n_users``/``n_items`` (both SplitDataset and
    ManifestSplits qualify). A user is evaluable when they have at least
    one pair in the chosen split; their training items are removed from
    the candidate set. Deterministic: per-user results accumulate in
    ascending user order.
    """
    cfg = cfg or EvalConfig()
    if which == "validation":
        heldout = data.validation_pairs
    elif which == "test":
        heldout = data.test_pairs
    else:
        raise ValueError(f"unknown split {which!r}; expected 'validation' or 'test'")

    n_users, n_items = data.n_users, data.n_items
    truth_items, truth_indptr = _pairs_by_user(heldout, n_users)
    train_items, train_indptr = _pairs_by_user(data.train_pairs, n_users)
    eval_users = np.flatnonzero(np.diff(truth_indptr) > 0)
    if eval_users.size == 0:
        raise DataError(f"no evaluable users in the {which} split")

    max_n = max(cfg.cutoffs)
    # discount weights for positions 1..max_n: w[p-1] = 1/log(p+1)
    discounts = 1.0 / np.log(np.arange(2, max_n + 2, dtype=np.float64))
    discount_cumsum = np.cumsum(discounts)

    per_metric = {name: np.zeros((eval_users.size, len(cfg.cutoffs))) for name in METRIC_NAMES}

    for block_start in range(0, eval_users.size, _USER_BLOCK):
        block = eval_users[block_start:block_start + _USER_BLOCK]
        scores = finals.user[block] @ finals.item.T
        for row, user in enumerate(block):
            user = int(user)
            truth = truth_items[truth_indptr[user]:truth_indptr[user + 1]]
            excluded = (
                train_items[train_indptr[user]:train_indptr[user + 1]]
                if cfg.exclude_train
                else np.empty(0, dtype=np.int64)
            )
            recs = _rank_row(scores[row], excluded, max_n)

            relevant = np.zeros(n_items, dtype=bool)
            relevant[truth] = True
            hit_flags = np.zeros(max_n, dtype=np.float64)
            hit_flags[: recs.shape[0]] = relevant[recs]
            hit_cumsum = np.cumsum(hit_flags)
            gain_cumsum = np.cumsum(hit_flags * discounts)
            hit_positions = np.flatnonzero(hit_flags)
            first_hit = int(hit_positions[0]) if hit_positions.size else max_n

            out_row = block_start + row
            for col, cutoff in enumerate(cfg.cutoffs):
                n_hits = hit_cumsum[cutoff - 1]
                per_metric["recall"][out_row, col] = n_hits / truth.shape[0]
                per_metric["precision"][out_row, col] = n_hits / cutoff
                per_metric["hit"][out_row, col] = 1.0 if n_hits > 0 else 0.0
                if cfg.standard_ndcg:
                    ideal = min(cutoff, truth.shape[0])
                    denominator = discount_cumsum[ideal - 1]
                else:
                    denominator = discount_cumsum[cutoff - 1]
                per_metric["ndcg"][out_row, col] = gain_cumsum[cutoff - 1] / denominator
                per_metric["mrr"][out_row, col] = 1.0 / (first_hit + 1) if first_hit < cutoff else 0.0

    means = {name: per_metric[name].mean(axis=0) for name in METRIC_NAMES}
    as_dict = lambda vec: {cutoff: float(v) for cutoff, v in zip(cfg.cutoffs, vec)}
    return MetricReport(
        split=which,
        cutoffs=cfg.cutoffs,
        recall=as_dict(means["recall"]),
        precision=as_dict(means["precision"]),
        hit=as_dict(means["hit"]),
        ndcg=as_dict(means["ndcg"]),
        mrr=as_dict(means["mrr"]),
        n_users_evaluated=int(eval_users.size),
    )


def format_report(report: MetricReport, reference: dict | None = None) -> str:
    """Human-readable aligned table, values at 4 decimals.

    ``reference`` optionally maps "metric@cutoff" to a comparison value,
    rendered side by side with the measured number.
    """
    lines = [f"split: {report.split}   users evaluated: {report.n_users_evaluated}"]
    header = f"{'N':>4}" + "".join(f"{name:>12}" for name in METRIC_NAMES)
    lines.append(header)
    for cutoff in report.cutoffs:
        row = f"{cutoff:>4}" + "".join(f"{report.value(name, cutoff):>12.4f}" for name in METRIC_NAMES)
        lines.append(row)
        if reference:
            ref_cells = []
            for name in METRIC_NAMES:
                ref = reference.get(f"{name}@{cutoff}")
                ref_cells.append(f"{ref:>12.4f}" if ref is not None else f"{'-':>12}")
            if any(cell.strip() != "-" for cell in ref_cells):
                lines.append(f"{'ref':>4}" + "".join(ref_cells))
    return "\n".join(lines) + "\n"


def write_report_records(report: MetricReport, stream: IO[str]) -> None:
    """Machine-readable report: one JSON record per (cutoff, metric)."""
    for cutoff in report.cutoffs:
        for name in METRIC_NAMES:
            record = {
                "split": report.split,
                "cutoff": cutoff,
                "metric": name,
                "value": report.value(name, cutoff),
                "n_users": report.n_users_evaluated,
            }
            stream.write(json.dumps(record, sort_keys=True) + "\n")
