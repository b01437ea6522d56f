"""Joint mini-batch training of the layer-0 embeddings.

Each step samples (user, positive item, negative item, tag) tuples,
computes the pairwise ranking loss plus the translation regularizer and an
L2 penalty on the sampled layer-0 rows, backpropagates through the linear
propagation map analytically, and applies Adam. Validation Recall@20
drives early stopping; the best snapshot is returned.

All three loss terms use mean reduction over the batch so the learning
rate stays decoupled from the batch size.
"""

import math
from dataclasses import dataclass, field
from typing import IO, NamedTuple

import numpy as np
from scipy.special import expit

from .dataset import SplitDataset
from .errors import ConfigError, DataError, NumericalError
from .evaluation import EvalConfig, evaluate
from .graph import FolksonomyGraphs
from .model import EmbeddingTable, FinalEmbeddings, ModelConfig, init_embeddings, propagate, propagate_adjoint
from .seeds import substream

__all__ = [
    "TrainConfig",
    "RunConfig",
    "parse_run_config",
    "TrainBatch",
    "SampleIndex",
    "build_sample_index",
    "sample_batch",
    "bpr_loss",
    "transrt_loss",
    "l2_penalty",
    "Gradients",
    "compute_gradients",
    "AdamState",
    "adam_step",
    "TrainReport",
    "train",
]


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 2048
    alpha: float = 1e-4
    gamma: float = 1e-4
    max_epochs: int = 1000
    eval_every: int = 1
    patience: int = 10
    seed: int = 2022

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")


_CONFIG_KEYS = {
    "dim": int,
    "n_layers": int,
    "learning_rate": float,
    "batch_size": int,
    "alpha": float,
    "gamma": float,
    "max_epochs": int,
    "eval_every": int,
    "patience": int,
    "seed": int,
    "min_tag_count": int,
}


@dataclass
class RunConfig:
    """One run's full configuration (model + optimizer + preprocessing)."""

    dim: int = 64
    n_layers: int = 2
    learning_rate: float = 0.001
    batch_size: int = 2048
    alpha: float = 1e-4
    gamma: float = 1e-4
    max_epochs: int = 1000
    eval_every: int = 1
    patience: int = 10
    seed: int = 2022
    min_tag_count: int = 5

    def __post_init__(self):
        if self.min_tag_count < 1:
            raise ConfigError("min_tag_count must be >= 1")
        self.train_config()  # validates the shared fields
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")

    def model_config(self) -> ModelConfig:
        return ModelConfig(dim=self.dim, n_layers=self.n_layers)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            alpha=self.alpha,
            gamma=self.gamma,
            max_epochs=self.max_epochs,
            eval_every=self.eval_every,
            patience=self.patience,
            seed=self.seed,
        )


def parse_run_config(stream: IO[str]) -> RunConfig:
    """Parse a line-oriented ``key = value`` config.

    Blank lines and ``#`` comments are allowed; unknown keys are an error
    naming the key.
    """
    values: dict = {}
    for line_number, line in enumerate(stream, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_number}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {line_number}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_number}: duplicate config key {key!r}")
        caster = _CONFIG_KEYS[key]
        try:
            values[key] = caster(raw)
        except ValueError:
            raise ConfigError(
                f"line {line_number}: bad value {raw!r} for key {key!r} (expected {caster.__name__})"
            ) from None
    return RunConfig(**values)


class TrainBatch(NamedTuple):
    """Vectorized batch of (user, positive, negative, tag) samples."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray
    tags: np.ndarray

    def __len__(self) -> int:
        return self.users.shape[0]


@dataclass
class SampleIndex:
    """Precomputed structures for uniform pair/negative/tag sampling."""

    n_items: int
    pairs: np.ndarray            # unique train (user, item), sorted
    pair_tag_indptr: np.ndarray  # into pair_tags, aligned with pairs
    pair_tags: np.ndarray
    train_codes: np.ndarray      # sorted user * n_items + item
    user_item_counts: np.ndarray


def build_sample_index(data: SplitDataset) -> SampleIndex:
    triples = data.train
    if triples.shape[0] == 0:
        raise DataError("empty training split")
    order = np.lexsort((triples[:, 1], triples[:, 2], triples[:, 0]))
    users = triples[order, 0]
    tags = triples[order, 1]
    items = triples[order, 2]
    codes = users * data.n_items + items
    boundaries = np.empty(codes.shape[0], dtype=bool)
    boundaries[0] = True
    np.not_equal(codes[1:], codes[:-1], out=boundaries[1:])
    starts = np.flatnonzero(boundaries)
    pairs = np.column_stack([users[starts], items[starts]])
    indptr = np.append(starts, codes.shape[0]).astype(np.int64)
    return SampleIndex(
        n_items=data.n_items,
        pairs=pairs.astype(np.int64),
        pair_tag_indptr=indptr,
        pair_tags=tags.copy(),
        train_codes=np.unique(codes),
        user_item_counts=np.bincount(pairs[:, 0], minlength=data.n_users).astype(np.int64),
    )


def sample_batch(index: SampleIndex, size: int, rng: np.random.Generator) -> TrainBatch:
    """Draw one training batch.

    Positive pairs are uniform over training pairs; the negative item is
    re-drawn until it is unobserved for the user; the tag is uniform over
    the tags of the chosen pair.
    """
    n_pairs = index.pairs.shape[0]
    pair_idx = rng.integers(0, n_pairs, size=size)
    users = index.pairs[pair_idx, 0]
    pos_items = index.pairs[pair_idx, 1]

    if np.any(index.user_item_counts[users] >= index.n_items):
        raise DataError("no negative candidates: a sampled user interacts with every item")

    neg_items = rng.integers(0, index.n_items, size=size)
    while True:
        codes = users * index.n_items + neg_items
        pos = np.searchsorted(index.train_codes, codes)
        pos = np.minimum(pos, index.train_codes.shape[0] - 1)
        bad = index.train_codes[pos] == codes
        if not np.any(bad):
            break
        neg_items[bad] = rng.integers(0, index.n_items, size=int(bad.sum()))

    starts = index.pair_tag_indptr[pair_idx]
    counts = index.pair_tag_indptr[pair_idx + 1] - starts
    tags = index.pair_tags[starts + rng.integers(0, counts)]
    return TrainBatch(users=users, pos_items=pos_items, neg_items=neg_items, tags=tags)


def _score_gaps(batch: TrainBatch, finals: FinalEmbeddings) -> np.ndarray:
    user_rows = finals.user[batch.users]
    return np.einsum("bd,bd->b", user_rows, finals.item[batch.pos_items] - finals.item[batch.neg_items])


def bpr_loss(batch: TrainBatch, finals: FinalEmbeddings) -> float:
    """Mean softplus(-(score_pos - score_neg)) over the batch."""
    gaps = _score_gaps(batch, finals)
    return float(np.mean(np.logaddexp(0.0, -gaps)))


def transrt_loss(batch: TrainBatch, finals: FinalEmbeddings, alpha: float) -> float:
    """alpha times the mean translation residual over positive triples."""
    if alpha == 0.0:
        return 0.0
    diff = finals.user[batch.users] + finals.tag[batch.tags] - finals.item[batch.pos_items]
    return float(alpha * np.mean(np.einsum("bd,bd->b", diff, diff)))


def l2_penalty(batch: TrainBatch, table: EmbeddingTable, gamma: float) -> float:
    """gamma times the mean half squared norm of the sampled layer-0 rows."""
    if gamma == 0.0:
        return 0.0
    total = (
        np.einsum("bd,bd->b", table.user0[batch.users], table.user0[batch.users])
        + np.einsum("bd,bd->b", table.item0[batch.pos_items], table.item0[batch.pos_items])
        + np.einsum("bd,bd->b", table.item0[batch.neg_items], table.item0[batch.neg_items])
        + np.einsum("bd,bd->b", table.tag0[batch.tags], table.tag0[batch.tags])
    )
    return float(gamma * 0.5 * np.mean(total))


class Gradients(NamedTuple):
    user: np.ndarray
    item: np.ndarray
    tag: np.ndarray


def compute_gradients(
    batch: TrainBatch,
    graphs: FolksonomyGraphs,
    table: EmbeddingTable,
    model_cfg: ModelConfig,
    alpha: float,
    gamma: float,
    finals: FinalEmbeddings | None = None,
) -> Gradients:
    """Exact gradient of the total batch loss w.r.t. the layer-0 tables.

    Loss gradients are first accumulated on the final embeddings of the
    batch entities, then pulled back through the propagation map's
    transpose; the L2 term contributes directly on layer 0.
    """
    if finals is None:
        finals = propagate(graphs, table, model_cfg)
    batch_size = len(batch)

    grad_user = np.zeros_like(finals.user)
    grad_item = np.zeros_like(finals.item)
    grad_tag = np.zeros_like(finals.tag)

    user_rows = finals.user[batch.users]
    pos_rows = finals.item[batch.pos_items]
    neg_rows = finals.item[batch.neg_items]

    gaps = np.einsum("bd,bd->b", user_rows, pos_rows - neg_rows)
    # d/d(gap) of softplus(-gap), divided by the batch size (mean reduction)
    coef = (-expit(-gaps) / batch_size)[:, None]
    np.add.at(grad_user, batch.users, coef * (pos_rows - neg_rows))
    np.add.at(grad_item, batch.pos_items, coef * user_rows)
    np.add.at(grad_item, batch.neg_items, -coef * user_rows)

    if alpha != 0.0:
        diff = user_rows + finals.tag[batch.tags] - pos_rows
        scaled = (2.0 * alpha / batch_size) * diff
        np.add.at(grad_user, batch.users, scaled)
        np.add.at(grad_tag, batch.tags, scaled)
        np.add.at(grad_item, batch.pos_items, -scaled)

    grad_user0, grad_item0, grad_tag0 = propagate_adjoint(graphs, grad_user, grad_item, grad_tag, model_cfg)

    if gamma != 0.0:
        scale = gamma / batch_size
        np.add.at(grad_user0, batch.users, scale * table.user0[batch.users])
        np.add.at(grad_item0, batch.pos_items, scale * table.item0[batch.pos_items])
        np.add.at(grad_item0, batch.neg_items, scale * table.item0[batch.neg_items])
        np.add.at(grad_tag0, batch.tags, scale * table.tag0[batch.tags])

    return Gradients(user=grad_user0, item=grad_item0, tag=grad_tag0)


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the embedding table."""

    m_user: np.ndarray
    v_user: np.ndarray
    m_item: np.ndarray
    v_item: np.ndarray
    m_tag: np.ndarray
    v_tag: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, table: EmbeddingTable) -> "AdamState":
        return cls(
            m_user=np.zeros_like(table.user0),
            v_user=np.zeros_like(table.user0),
            m_item=np.zeros_like(table.item0),
            v_item=np.zeros_like(table.item0),
            m_tag=np.zeros_like(table.tag0),
            v_tag=np.zeros_like(table.tag0),
        )


def adam_step(state: AdamState, grads: Gradients, table: EmbeddingTable, lr: float) -> None:
    """One bias-corrected Adam update, in place on table and state."""
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    groups = (
        (state.m_user, state.v_user, table.user0, grads.user),
        (state.m_item, state.v_item, table.item0, grads.item),
        (state.m_tag, state.v_tag, table.tag0, grads.tag),
    )
    for m, v, param, grad in groups:
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        param -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


@dataclass
class EpochStats:
    epoch: int
    bpr: float
    transrt: float
    l2: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    val_history: list[tuple[int, float]] = field(default_factory=list)
    best_epoch: int | None = None
    best_recall: float = float("-inf")
    stop_reason: str = ""


def _log_line(stats: EpochStats, val_recall: float | None) -> str:
    val = f"{val_recall:.6g}" if val_recall is not None else "-"
    return f"{stats.epoch}\t{stats.bpr:.6g}\t{stats.transrt:.6g}\t{stats.l2:.6g}\t{val}"


def train(
    data: SplitDataset,
    graphs: FolksonomyGraphs,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    log_stream: IO[str] | None = None,
) -> tuple[EmbeddingTable, TrainReport]:
    """Optimize the embeddings; return the best validation snapshot.

    Runs ceil(n_train_pairs / batch_size) batches per epoch. Every
    ``eval_every`` epochs validation Recall@20 is measured; training stops
    after ``patience`` consecutive evaluations without improvement or at
    ``max_epochs``. If validation never ran, the final table is returned.
    """
    index = build_sample_index(data)
    table = init_embeddings(
        train_cfg.seed, model_cfg.dim, data.n_users, data.n_items, data.n_tags
    )
    rng = substream(train_cfg.seed, "sampling")
    adam = AdamState.zeros_like(table)
    batches_per_epoch = math.ceil(index.pairs.shape[0] / train_cfg.batch_size)

    report = TrainReport()
    best_table: EmbeddingTable | None = None
    evals_without_improvement = 0
    can_validate = data.validation_pairs.shape[0] > 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        bpr_sum = transrt_sum = l2_sum = 0.0
        for _ in range(batches_per_epoch):
            batch = sample_batch(index, train_cfg.batch_size, rng)
            finals = propagate(graphs, table, model_cfg)
            bpr = bpr_loss(batch, finals)
            transrt = transrt_loss(batch, finals, train_cfg.alpha)
            l2 = l2_penalty(batch, table, train_cfg.gamma)
            if not math.isfinite(bpr + transrt + l2):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} (bpr={bpr}, transrt={transrt}, l2={l2}); "
                    "the learning rate is likely too high"
                )
            grads = compute_gradients(
                batch, graphs, table, model_cfg, train_cfg.alpha, train_cfg.gamma, finals=finals
            )
            adam_step(adam, grads, table, train_cfg.learning_rate)
            bpr_sum += bpr
            transrt_sum += transrt
            l2_sum += l2

        stats = EpochStats(
            epoch=epoch,
            bpr=bpr_sum / batches_per_epoch,
            transrt=transrt_sum / batches_per_epoch,
            l2=l2_sum / batches_per_epoch,
        )
        report.epochs.append(stats)

        val_recall: float | None = None
        if can_validate and epoch % train_cfg.eval_every == 0:
            finals = propagate(graphs, table, model_cfg)
            val_report = evaluate(finals, "validation", data, EvalConfig(cutoffs=(20,)))
            val_recall = val_report.recall[20]
            report.val_history.append((epoch, val_recall))
            if val_recall > report.best_recall:
                report.best_recall = val_recall
                report.best_epoch = epoch
                best_table = table.copy()
                evals_without_improvement = 0
            else:
                evals_without_improvement += 1

        if log_stream is not None:
            log_stream.write(_log_line(stats, val_recall) + "\n")

        if val_recall is not None and evals_without_improvement >= train_cfg.patience:
            report.stop_reason = "early_stopping"
            break
    else:
        report.stop_reason = "max_epochs"

    if best_table is None:
        best_table = table
    return best_table, report
