"""Layer-0 embeddings, light graph propagation, and scoring.

Propagation repeats a parameter-free neighbor sum (no feature transforms,
no activations, no self-loops) over both bipartite graphs and combines the
K+1 layer outputs with fixed weights. The tag table is shared: at each
layer a tag receives the average of its user-side and item-side messages.

The whole map from layer 0 to the final embeddings is linear, which
training exploits: gradients flow back through :func:`propagate_adjoint`,
the exact transpose of the forward map.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import IdMap
from .errors import DataError
from .graph import BipartiteGraph, FolksonomyGraphs
from .seeds import substream

__all__ = [
    "ModelConfig",
    "EmbeddingTable",
    "FinalEmbeddings",
    "init_embeddings",
    "propagate",
    "propagate_adjoint",
    "score",
    "score_all_items",
    "transrt_score",
    "Snapshot",
    "snapshot_bytes",
    "save_snapshot",
    "load_snapshot",
]

INIT_STD = 0.1


@dataclass
class ModelConfig:
    """Embedding dimension, propagation depth, and layer-combination weights.

    ``layer_weights`` has n_layers + 1 entries (one per layer 0..K) and
    defaults to the uniform 1/(K+1).
    """

    dim: int
    n_layers: int
    layer_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.layer_weights is None:
            self.layer_weights = np.full(self.n_layers + 1, 1.0 / (self.n_layers + 1))
        else:
            self.layer_weights = np.asarray(self.layer_weights, dtype=np.float64)
            if self.layer_weights.shape != (self.n_layers + 1,):
                raise ValueError("layer_weights must have n_layers + 1 entries")
            if np.any(self.layer_weights < 0):
                raise ValueError("layer_weights must be non-negative")


@dataclass
class EmbeddingTable:
    """Trainable layer-0 embeddings; the tag table is shared by both graphs."""

    user0: np.ndarray
    item0: np.ndarray
    tag0: np.ndarray

    @property
    def dim(self) -> int:
        return self.user0.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.user0.copy(), self.item0.copy(), self.tag0.copy())

    def all_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.user0))
            and np.all(np.isfinite(self.item0))
            and np.all(np.isfinite(self.tag0))
        )


@dataclass
class FinalEmbeddings:
    """Layer-combined representations used for scoring and regularization."""

    user: np.ndarray
    item: np.ndarray
    tag: np.ndarray


def init_embeddings(seed: int, dim: int, n_users: int, n_items: int, n_tags: int) -> EmbeddingTable:
    """Draw all layer-0 entries from N(0, 0.1^2) under the "init" substream."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = substream(seed, "init")
    return EmbeddingTable(
        user0=rng.normal(0.0, INIT_STD, size=(n_users, dim)),
        item0=rng.normal(0.0, INIT_STD, size=(n_items, dim)),
        tag0=rng.normal(0.0, INIT_STD, size=(n_tags, dim)),
    )


def propagate(graphs: FolksonomyGraphs, table: EmbeddingTable, cfg: ModelConfig) -> FinalEmbeddings:
    """Run K light-aggregation layers and combine them with the layer weights.

    Per layer, users pull from their tags in the tagging graph, items from
    their tags in the tagged graph, and each tag averages what it pulls
    from users and from items (factor 1/2). Isolated nodes contribute and
    receive zero at every layer >= 1. Neighbor sums run in ascending
    neighbor order via the compressed adjacency, so the result does not
    depend on any worker count.
    """
    weights = cfg.layer_weights
    tagging, tagged = graphs.tagging.matrix, graphs.tagged.matrix
    tagging_t, tagged_t = graphs.tagging.matrix_t, graphs.tagged.matrix_t

    users, items, tags = table.user0, table.item0, table.tag0
    final_user = weights[0] * users
    final_item = weights[0] * items
    final_tag = weights[0] * tags
    for k in range(1, cfg.n_layers + 1):
        users, items, tags = (
            tagging @ tags,
            tagged @ tags,
            0.5 * (tagging_t @ users + tagged_t @ items),
        )
        final_user += weights[k] * users
        final_item += weights[k] * items
        final_tag += weights[k] * tags
    return FinalEmbeddings(user=final_user, item=final_item, tag=final_tag)


def propagate_adjoint(
    graphs: FolksonomyGraphs,
    grad_user: np.ndarray,
    grad_item: np.ndarray,
    grad_tag: np.ndarray,
    cfg: ModelConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply the transpose of the propagation map to final-embedding gradients.

    Because finals are linear in layer 0, this turns d(loss)/d(finals) into
    d(loss)/d(layer 0). The one-step transpose moves the tag-fusion factor
    1/2 onto the user and item pulls:

        step_T(gu, gi, gt) = (tagging @ gt / 2, tagged @ gt / 2,
                              tagging_T @ gu + tagged_T @ gi)
    """
    weights = cfg.layer_weights
    tagging, tagged = graphs.tagging.matrix, graphs.tagged.matrix
    tagging_t, tagged_t = graphs.tagging.matrix_t, graphs.tagged.matrix_t

    users, items, tags = grad_user, grad_item, grad_tag
    out_user = weights[0] * users
    out_item = weights[0] * items
    out_tag = weights[0] * tags
    for k in range(1, cfg.n_layers + 1):
        users, items, tags = (
            0.5 * (tagging @ tags),
            0.5 * (tagged @ tags),
            tagging_t @ users + tagged_t @ items,
        )
        out_user += weights[k] * users
        out_item += weights[k] * items
        out_tag += weights[k] * tags
    return out_user, out_item, out_tag


def score(u: int, i: int, finals: FinalEmbeddings) -> float:
    """Predicted preference: inner product of final user and item vectors."""
    return float(np.dot(finals.user[u], finals.item[i]))


def score_all_items(u: int, finals: FinalEmbeddings) -> np.ndarray:
    """Scores of user ``u`` against every item."""
    return finals.item @ finals.user[u]


def transrt_score(u: int, t: int, i: int, finals: FinalEmbeddings) -> float:
    """Translation residual ||e_u + e_t - e_i||^2 on final embeddings."""
    diff = finals.user[u] + finals.tag[t] - finals.item[i]
    return float(np.dot(diff, diff))


# --- snapshot file -----------------------------------------------------------
#
# Layout: magic line, one JSON header line (sorted keys), then the raw
# little-endian bytes of each array in header order. Finals are never
# stored; they are recomputed from layer 0 plus the stored graph edges.

_SNAPSHOT_MAGIC = b"FOLKREC-SNAPSHOT-1\n"


@dataclass
class Snapshot:
    table: EmbeddingTable
    graphs: FolksonomyGraphs
    config: ModelConfig
    id_map: IdMap
    n_users: int = field(init=False)
    n_items: int = field(init=False)
    n_tags: int = field(init=False)

    def __post_init__(self):
        self.n_users = self.table.user0.shape[0]
        self.n_items = self.table.item0.shape[0]
        self.n_tags = self.table.tag0.shape[0]


def snapshot_bytes(table: EmbeddingTable, graphs: FolksonomyGraphs,
                   cfg: ModelConfig, id_map: IdMap) -> bytes:
    """Serialize a self-contained snapshot; byte-identical for identical inputs."""
    tagging_left, tagging_right, _ = graphs.tagging.edge_arrays()
    tagged_left, tagged_right, _ = graphs.tagged.edge_arrays()
    arrays = {
        "user0": np.ascontiguousarray(table.user0, dtype=np.float64),
        "item0": np.ascontiguousarray(table.item0, dtype=np.float64),
        "tag0": np.ascontiguousarray(table.tag0, dtype=np.float64),
        "tagging_users": np.ascontiguousarray(tagging_left, dtype=np.int64),
        "tagging_tags": np.ascontiguousarray(tagging_right, dtype=np.int64),
        "tagged_items": np.ascontiguousarray(tagged_left, dtype=np.int64),
        "tagged_tags": np.ascontiguousarray(tagged_right, dtype=np.int64),
        "user_ids": np.ascontiguousarray(id_map.user_ids, dtype=np.int64),
        "item_ids": np.ascontiguousarray(id_map.item_ids, dtype=np.int64),
        "tag_ids": np.ascontiguousarray(id_map.tag_ids, dtype=np.int64),
    }
    header = {
        "dim": cfg.dim,
        "n_layers": cfg.n_layers,
        "layer_weights": [float(w) for w in cfg.layer_weights],
        "n_users": table.user0.shape[0],
        "n_items": table.item0.shape[0],
        "n_tags": table.tag0.shape[0],
        "arrays": [
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
            for name, arr in arrays.items()
        ],
    }
    buf = io.BytesIO()
    buf.write(_SNAPSHOT_MAGIC)
    buf.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    buf.write(b"\n")
    for arr in arrays.values():
        buf.write(arr.tobytes())
    return buf.getvalue()


def save_snapshot(path: str, table: EmbeddingTable, graphs: FolksonomyGraphs,
                  cfg: ModelConfig, id_map: IdMap) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(table, graphs, cfg, id_map))


def load_snapshot(path: str) -> Snapshot:
    """Reload a snapshot written by :func:`save_snapshot`."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _SNAPSHOT_MAGIC:
            raise DataError(f"{path}: not a folkrec snapshot")
        header = json.loads(fh.readline().decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataError(f"{path}: truncated snapshot")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    cfg = ModelConfig(
        dim=header["dim"],
        n_layers=header["n_layers"],
        layer_weights=np.asarray(header["layer_weights"], dtype=np.float64),
    )
    table = EmbeddingTable(arrays["user0"], arrays["item0"], arrays["tag0"])
    graphs = FolksonomyGraphs(
        tagging=BipartiteGraph.from_edges(
            header["n_users"], header["n_tags"], arrays["tagging_users"], arrays["tagging_tags"]
        ),
        tagged=BipartiteGraph.from_edges(
            header["n_items"], header["n_tags"], arrays["tagged_items"], arrays["tagged_tags"]
        ),
    )
    id_map = IdMap.from_reverse(arrays["user_ids"], arrays["item_ids"], arrays["tag_ids"])
    return Snapshot(table=table, graphs=graphs, config=cfg, id_map=id_map)
