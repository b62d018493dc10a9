"""Undirected graph storage, edge masking, sampling, and the smoothness metric.

Graphs are immutable after construction: node count, a symmetric CSR
adjacency (each undirected edge stored as both ordered pairs), a dense
float64 feature matrix, and optional integer labels. All sampling here is
deterministic given its integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .sparse import SparseMatrix


class GraphFormatError(ValueError):
    """A dataset file failed to parse; message carries the line number."""


def _canonical_pairs(pairs: np.ndarray) -> np.ndarray:
    """Dedupe to unique undirected pairs (u < v), sorted lexicographically."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return pairs
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi  # self loops are dropped
    return np.unique(np.column_stack([lo[keep], hi[keep]]), axis=0)


@dataclass
class Graph:
    """Symmetric, self-loop-free graph with node features.

    col_indices holds both directions of every undirected edge, so the
    ordered edge count is twice the undirected pair count.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.num_nodes
        if len(self.row_offsets) != n + 1 or np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row offsets must be nondecreasing, length N+1")
        if self.row_offsets[-1] != len(self.col_indices):
            raise ValueError("last offset must equal the ordered edge count")
        if len(self.col_indices):
            if self.col_indices.min() < 0 or self.col_indices.max() >= n:
                raise ValueError("edge index out of range")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must have {n} rows")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValueError("labels must be a length-N vector")
        rows = np.repeat(np.arange(n), self.degrees)
        if np.any(rows == self.col_indices):
            raise ValueError("self loops are not allowed")
        fwd = {(int(u), int(v)) for u, v in zip(rows, self.col_indices)}
        if any((v, u) not in fwd for (u, v) in fwd):
            raise ValueError("adjacency must be symmetric")

    @classmethod
    def from_edges(cls, pairs, features, labels=None) -> "Graph":
        """Build from an edge list; symmetrizes, dedupes, drops self loops."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = features.shape[0]
        und = _canonical_pairs(pairs)
        if len(und) and (und.min() < 0 or und.max() >= n):
            raise ValueError(
                f"edge index out of range: node ids must be < {n} (feature rows)"
            )
        both = np.vstack([und, und[:, ::-1]]) if len(und) else und
        order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else []
        both = both[order] if len(both) else both.reshape(0, 2)
        counts = np.bincount(both[:, 0], minlength=n) if len(both) else np.zeros(n, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(n, offsets, both[:, 1] if len(both) else np.zeros(0, dtype=np.int64),
                   features, labels)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def ordered_edge_count(self) -> int:
        return len(self.col_indices)

    @property
    def undirected_edge_count(self) -> int:
        return len(self.col_indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def undirected_pairs(self) -> np.ndarray:
        """Unique (u, v) with u < v, in lexicographic order."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows < self.col_indices
        return np.column_stack([rows[keep], self.col_indices[keep]])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.undirected_pairs()}

    def contains_edge(self, u: int, v: int) -> bool:
        return v in self.neighbors(u)


class EdgeMaskSplit(NamedTuple):
    """Partition of the undirected pairs into visible and masked sets."""

    visible: np.ndarray
    masked: np.ndarray
    mask_ratio: float
    seed: int


class NegativeEdgeSet(NamedTuple):
    pairs: np.ndarray
    seed: int


class NeighborMean(NamedTuple):
    values: np.ndarray    # N x D, zero rows for isolated nodes
    active: np.ndarray    # bool, False where degree is 0


class HoldoutSplit(NamedTuple):
    train_graph: "Graph"
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


# ---------------------------------------------------------------------------
# file formats:  edges "u v" per line ('#' comments), features one row of
# reals per line, labels "node_id label_id" per line
# ---------------------------------------------------------------------------

def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_graph(edge_path, feature_path, label_path=None) -> Graph:
    """Load a graph from disk; edges are undirected regardless of file order."""
    rows = []
    width = None
    for lineno, line in _data_lines(feature_path):
        try:
            row = np.array(line.split(), dtype=np.float64)
        except ValueError:
            raise GraphFormatError(f"{feature_path}:{lineno}: malformed feature row")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(
                f"{feature_path}:{lineno}: expected {width} values, got {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise GraphFormatError(f"{feature_path}: no feature rows")
    features = np.vstack(rows)
    n = features.shape[0]

    pairs = []
    for lineno, line in _data_lines(edge_path):
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{edge_path}:{lineno}: expected 'u v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{edge_path}:{lineno}: node ids must be integers")
        if u < 0 or v < 0:
            raise GraphFormatError(f"{edge_path}:{lineno}: node ids must be nonnegative")
        if u >= n or v >= n:
            raise GraphFormatError(
                f"{edge_path}:{lineno}: node id out of range (features define {n} nodes)"
            )
        pairs.append((u, v))

    labels = None
    if label_path is not None:
        labels = np.full(n, -1, dtype=np.int64)
        for lineno, line in _data_lines(label_path):
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{label_path}:{lineno}: expected 'node_id label_id'")
            try:
                i, lab = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{label_path}:{lineno}: ids must be integers")
            if not 0 <= i < n:
                raise GraphFormatError(f"{label_path}:{lineno}: node id out of range")
            labels[i] = lab
        if np.any(labels < 0):
            missing = int(np.sum(labels < 0))
            raise GraphFormatError(f"{label_path}: {missing} of {n} nodes unlabeled")

    return Graph.from_edges(np.array(pairs, dtype=np.int64).reshape(-1, 2),
                            features, labels)


def save_graph(graph: Graph, edge_path, feature_path, label_path=None):
    """Write the loader formats back out; byte-deterministic."""
    with open(edge_path, "w") as fh:
        for u, v in graph.undirected_pairs():
            fh.write(f"{u} {v}\n")
    with open(feature_path, "w") as fh:
        for row in graph.features:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    if label_path is not None:
        if graph.labels is None:
            raise ValueError("graph has no labels to save")
        with open(label_path, "w") as fh:
            for i, lab in enumerate(graph.labels):
                fh.write(f"{i} {lab}\n")


def save_pairs(pairs: np.ndarray, path):
    with open(path, "w") as fh:
        for u, v in np.asarray(pairs, dtype=np.int64).reshape(-1, 2):
            fh.write(f"{u} {v}\n")


def load_pairs(path) -> np.ndarray:
    pairs = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'u v'")
        pairs.append((int(parts[0]), int(parts[1])))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def gcn_normalize(pairs, num_nodes: int) -> SparseMatrix:
    """Symmetrically normalized adjacency with self loops.

    Entry (i, j) weighs 1/sqrt(d_i * d_j) where d counts the self loop,
    so even an edgeless graph yields the identity.
    """
    und = _canonical_pairs(pairs)
    if len(und) and und.max() >= num_nodes:
        raise ValueError("edge index out of range")
    deg = np.ones(num_nodes, dtype=np.int64)  # self loop
    if len(und):
        deg += np.bincount(und[:, 0], minlength=num_nodes)
        deg += np.bincount(und[:, 1], minlength=num_nodes)
    loops = np.arange(num_nodes, dtype=np.int64)
    if len(und):
        src = np.concatenate([und[:, 0], und[:, 1], loops])
        dst = np.concatenate([und[:, 1], und[:, 0], loops])
    else:
        src, dst = loops, loops.copy()
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    inv_sqrt = 1.0 / np.sqrt(deg.astype(np.float64))
    weights = inv_sqrt[src] * inv_sqrt[dst]
    counts = np.bincount(src, minlength=num_nodes)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return SparseMatrix(num_nodes, num_nodes, offsets, dst, weights)


def neighbor_mean_operator(graph: Graph) -> SparseMatrix:
    """Row-stochastic mean-over-neighbors operator (zero rows if isolated)."""
    deg = graph.degrees
    rows = np.repeat(np.arange(graph.num_nodes), deg)
    weights = 1.0 / deg[rows].astype(np.float64) if len(rows) else np.zeros(0)
    return SparseMatrix(graph.num_nodes, graph.num_nodes,
                        graph.row_offsets, graph.col_indices, weights)


def neighbor_mean(graph: Graph, z: np.ndarray) -> NeighborMean:
    """Mean embedding of each node's neighbors in the original graph."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != graph.num_nodes:
        raise ValueError(f"embedding must have {graph.num_nodes} rows")
    values = neighbor_mean_operator(graph).matmul(z)
    return NeighborMean(values, graph.degrees > 0)


def smoothness_delta(graph: Graph, z: np.ndarray) -> float:
    """Aggregate squared embedding difference across adjacent pairs.

    Elementwise squared differences are accumulated over all ordered edges
    into one length-D vector; its 2-norm is divided by (ordered edge count
    * D). Zero iff every connected component has constant rows; scales
    quadratically with the embedding.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != graph.num_nodes:
        raise ValueError(f"embedding must have {graph.num_nodes} rows")
    m = graph.ordered_edge_count
    if m == 0:
        raise ValueError("smoothness is undefined for an edgeless graph")
    rows = np.repeat(np.arange(graph.num_nodes), graph.degrees)
    diff = z[rows] - z[graph.col_indices]
    acc = np.einsum("ij,ij->j", diff, diff)
    return float(np.linalg.norm(acc) / (m * z.shape[1]))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_edge_mask(graph: Graph, p: float, seed: int) -> EdgeMaskSplit:
    """Assign each undirected pair to the masked set with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mask ratio must be in [0, 1], got {p}")
    pairs = graph.undirected_pairs()
    rng = np.random.default_rng(seed)
    masked = rng.random(len(pairs)) < p
    return EdgeMaskSplit(pairs[~masked], pairs[masked], p, seed)


def sample_negative_edges(graph: Graph, count: int, seed: int) -> NegativeEdgeSet:
    """Uniform distinct non-edges via rejection (dense fallback when crowded)."""
    n = graph.num_nodes
    pairs = graph.undirected_pairs()
    max_neg = n * (n - 1) // 2 - len(pairs)
    if count > max_neg:
        raise ValueError(
            f"cannot sample {count} negative edges: only {max_neg} non-edges exist"
        )
    rng = np.random.default_rng(seed)
    if count == 0:
        return NegativeEdgeSet(np.zeros((0, 2), dtype=np.int64), seed)
    if count > max_neg // 2:
        # rejection would stall; enumerate the complement instead
        adj = np.zeros((n, n), dtype=bool)
        adj[pairs[:, 0], pairs[:, 1]] = True
        iu, ju = np.triu_indices(n, k=1)
        free = ~adj[iu, ju]
        candidates = np.column_stack([iu[free], ju[free]])
        chosen = rng.choice(len(candidates), size=count, replace=False)
        return NegativeEdgeSet(candidates[np.sort(chosen)], seed)
    existing = np.sort(pairs[:, 0] * n + pairs[:, 1]) if len(pairs) else np.zeros(0, np.int64)
    chosen = np.zeros(0, dtype=np.int64)
    while len(chosen) < count:
        draw = rng.integers(0, n, size=(2 * (count - len(chosen)) + 8, 2))
        lo = np.minimum(draw[:, 0], draw[:, 1])
        hi = np.maximum(draw[:, 0], draw[:, 1])
        keys = (lo * n + hi)[lo != hi]
        keys = keys[~np.isin(keys, existing)]
        # first occurrences in draw order, minus anything already chosen
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
        keys = keys[~np.isin(keys, chosen)]
        chosen = np.concatenate([chosen, keys[:count - len(chosen)]])
    return NegativeEdgeSet(np.column_stack([chosen // n, chosen % n]), seed)


def split_edges_holdout(graph: Graph, val_frac: float, test_frac: float,
                        seed: int) -> HoldoutSplit:
    """Hold out undirected edges for link prediction, with matched negatives."""
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1.0:
        raise ValueError("holdout fractions must be nonnegative and sum below 1")
    pairs = graph.undirected_pairs()
    n_edges = len(pairs)
    n_val = int(n_edges * val_frac)
    n_test = int(n_edges * test_frac)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_edges)
    val_pos = pairs[perm[:n_val]]
    test_pos = pairs[perm[n_val:n_val + n_test]]
    train_pairs = pairs[perm[n_val + n_test:]]
    neg_seed = int(rng.integers(0, 2 ** 63 - 1))
    neg = sample_negative_edges(graph, n_val + n_test, neg_seed).pairs
    train_graph = Graph.from_edges(train_pairs, graph.features, graph.labels)
    return HoldoutSplit(train_graph, val_pos, neg[:n_val], test_pos, neg[n_val:])


def node_split(num_nodes: int, seed: int):
    """Disjoint 10/10/80 percent train/val/test cover of [0, N)."""
    if num_nodes < 10:
        raise ValueError("node split needs at least 10 nodes")
    n_train = num_nodes // 10
    n_val = num_nodes // 10
    perm = np.random.default_rng(seed).permutation(num_nodes)
    return (np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:]))


def generate_sbm(blocks: int, nodes_per_block: int, p_in: float, p_out: float,
                 feature_dim: int, feature_noise: float, seed: int) -> Graph:
    """Stochastic block model with block-indicator features plus noise.

    Features are a one-hot block indicator in the first `blocks` dimensions
    (padded to feature_dim) plus i.i.d. Gaussian noise of the given scale.
    Labels are the block ids.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if blocks < 1 or nodes_per_block < 1:
        raise ValueError("blocks and nodes_per_block must be positive")
    if feature_dim < blocks:
        raise ValueError("feature_dim must be at least the number of blocks")
    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks), nodes_per_block)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    probs = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < probs
    pairs = np.column_stack([iu[keep], ju[keep]])
    features = np.zeros((n, feature_dim))
    features[np.arange(n), labels] = 1.0
    features += feature_noise * rng.standard_normal((n, feature_dim))
    return Graph.from_edges(pairs, features, labels)
