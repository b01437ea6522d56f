"""Light folksonomy-graph collaborative filtering for tag-aware top-K recommendation."""

from .dataset import (
    DatasetStats,
    Folksonomy,
    IdMap,
    RawAssignment,
    SplitDataset,
    build_folksonomy,
    compute_stats,
    filter_tags,
    parse_assignments,
    split_interactions,
)
from .errors import ConfigError, DataError, FolkrecError, NumericalError, ParseError
from .evaluation import EvalConfig, MetricReport, evaluate, top_k
from .graph import BipartiteGraph, FolksonomyGraphs, build_graphs, norm_coefficient
from .model import (
    EmbeddingTable,
    FinalEmbeddings,
    ModelConfig,
    init_embeddings,
    load_snapshot,
    propagate,
    save_snapshot,
    score,
    score_all_items,
    transrt_score,
)
from .training import RunConfig, TrainConfig, TrainReport, train

__version__ = "0.1.0"
