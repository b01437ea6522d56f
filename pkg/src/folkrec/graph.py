"""Bipartite folksonomy graphs with precomputed symmetric normalization.

Two graphs are built from the training triples: users-tags (tagging) and
items-tags (tagged). Edges are binary; each edge (a, b) carries the
coefficient 1/sqrt(deg(a) * deg(b)), identical in both directions.
Adjacency is stored compressed (offsets + sorted neighbor arrays) because
propagation is the hot loop and the coefficients never change.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO

import numpy as np
import scipy.sparse as sp

__all__ = ["BipartiteGraph", "FolksonomyGraphs", "norm_coefficient", "build_graphs", "dump_edges"]


def norm_coefficient(deg_a: int, deg_b: int) -> float:
    """Symmetric normalization 1/sqrt(deg_a * deg_b) for one edge."""
    if deg_a < 1 or deg_b < 1:
        raise ValueError("degrees must be positive; isolated nodes have no edges")
    return 1.0 / math.sqrt(deg_a * deg_b)


@dataclass
class BipartiteGraph:
    """Compressed binary bipartite adjacency, both directions.

    ``left_indices[left_indptr[a]:left_indptr[a+1]]`` are the (sorted)
    right-side neighbors of left node ``a``; ``left_coeffs`` aligns with
    ``left_indices``. The right_* arrays mirror the same edge set.
    """

    n_left: int
    n_right: int
    left_indptr: np.ndarray
    left_indices: np.ndarray
    left_coeffs: np.ndarray
    right_indptr: np.ndarray
    right_indices: np.ndarray
    right_coeffs: np.ndarray
    left_deg: np.ndarray
    right_deg: np.ndarray

    @classmethod
    def from_edges(cls, n_left: int, n_right: int, left_nodes: np.ndarray, right_nodes: np.ndarray) -> "BipartiteGraph":
        """Build from unique edge endpoint arrays (duplicates not allowed)."""
        left_nodes = np.asarray(left_nodes, dtype=np.int64)
        right_nodes = np.asarray(right_nodes, dtype=np.int64)
        codes = left_nodes * n_right + right_nodes
        order = np.argsort(codes, kind="stable")
        codes = codes[order]
        if codes.size and np.any(np.diff(codes) == 0):
            raise ValueError("duplicate edges")
        left_sorted = left_nodes[order]
        right_sorted = right_nodes[order]

        left_deg = np.bincount(left_sorted, minlength=n_left).astype(np.int64)
        right_deg = np.bincount(right_sorted, minlength=n_right).astype(np.int64)
        coeffs = 1.0 / np.sqrt((left_deg[left_sorted] * right_deg[right_sorted]).astype(np.float64))

        left_indptr = np.zeros(n_left + 1, dtype=np.int64)
        np.cumsum(left_deg, out=left_indptr[1:])

        # mirror ordering: sort edges by (right, left)
        t_order = np.lexsort((left_sorted, right_sorted))
        right_indptr = np.zeros(n_right + 1, dtype=np.int64)
        np.cumsum(right_deg, out=right_indptr[1:])

        return cls(
            n_left=n_left,
            n_right=n_right,
            left_indptr=left_indptr,
            left_indices=right_sorted,
            left_coeffs=coeffs,
            right_indptr=right_indptr,
            right_indices=left_sorted[t_order],
            right_coeffs=coeffs[t_order],
            left_deg=left_deg,
            right_deg=right_deg,
        )

    @property
    def n_edges(self) -> int:
        return int(self.left_indices.shape[0])

    def left_neighbors(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.left_indptr[a], self.left_indptr[a + 1]
        return self.left_indices[lo:hi], self.left_coeffs[lo:hi]

    def right_neighbors(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.right_indptr[b], self.right_indptr[b + 1]
        return self.right_indices[lo:hi], self.right_coeffs[lo:hi]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Normalized adjacency, left x right."""
        return sp.csr_matrix(
            (self.left_coeffs, self.left_indices, self.left_indptr),
            shape=(self.n_left, self.n_right),
        )

    @cached_property
    def matrix_t(self) -> sp.csr_matrix:
        """Normalized adjacency, right x left."""
        return sp.csr_matrix(
            (self.right_coeffs, self.right_indices, self.right_indptr),
            shape=(self.n_right, self.n_left),
        )

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges as (left, right, coefficient) arrays sorted by (left, right)."""
        left = np.repeat(np.arange(self.n_left, dtype=np.int64), np.diff(self.left_indptr))
        return left, self.left_indices, self.left_coeffs


@dataclass
class FolksonomyGraphs:
    """The user-tag and item-tag graphs over a shared tag index space."""

    tagging: BipartiteGraph
    tagged: BipartiteGraph

    @property
    def n_tags(self) -> int:
        return self.tagging.n_right


def build_graphs(train_triples: np.ndarray, n_users: int, n_items: int, n_tags: int) -> FolksonomyGraphs:
    """Build both graphs from training triples (columns user, tag, item).

    Edge multiplicity is discarded: (u, t) exists iff some training triple
    pairs them, likewise (i, t). Entities appearing only in held-out splits
    are kept in the index space as isolated nodes.
    """
    triples = np.asarray(train_triples, dtype=np.int64)
    if triples.size:
        ut = np.unique(triples[:, 0] * n_tags + triples[:, 1])
        it = np.unique(triples[:, 2] * n_tags + triples[:, 1])
    else:
        ut = np.empty(0, dtype=np.int64)
        it = np.empty(0, dtype=np.int64)
    tagging = BipartiteGraph.from_edges(n_users, n_tags, ut // n_tags, ut % n_tags)
    tagged = BipartiteGraph.from_edges(n_items, n_tags, it // n_tags, it % n_tags)
    return FolksonomyGraphs(tagging=tagging, tagged=tagged)


def dump_edges(graphs: FolksonomyGraphs, stream: IO[str]) -> None:
    """Debug dump: one line per edge, coefficient at 17 significant digits."""
    for side, graph in (("tagging", graphs.tagging), ("tagged", graphs.tagged)):
        left, right, coeffs = graph.edge_arrays()
        for a, b, c in zip(left, right, coeffs):
            stream.write(f"{side}\t{a}\t{b}\t{c:.17g}\n")
