"""Immutable CSR graph storage, symmetric normalization and structural diagnostics.

All functions here are pure: they never mutate their inputs, so they are safe
to call concurrently.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from sail import rng


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph in CSR form with dense node features.

    Neighbor lists are strictly ascending, contain no duplicates and no
    self-loops, and the adjacency is symmetric. Use :meth:`build` to construct
    one from a raw edge list; it deduplicates, symmetrizes and drops loops.
    """

    n: int
    indptr: np.ndarray   # int64, length n+1
    indices: np.ndarray  # int64, sorted per row
    features: np.ndarray  # float32, n x F
    labels: np.ndarray | None = None
    splits: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.features):
            arr.setflags(write=False)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_undirected_edges(self) -> int:
        return int(self.indices.size) // 2

    @property
    def num_incidences(self) -> int:
        """Directed incidence count: every undirected edge counted twice."""
        return int(self.indices.size)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        pos = np.searchsorted(row, v)
        return pos < row.size and row[pos] == v

    def edge_keys(self) -> np.ndarray:
        """Sorted u*n+v keys of all directed incidences, for fast membership tests."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        return np.sort(src * self.n + self.indices)

    def undirected_edges(self) -> np.ndarray:
        """(m, 2) array of undirected edges with u < v."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @classmethod
    def build(cls, n, edges, features, labels=None, splits=None) -> "Graph":
        """Construct a Graph from an iterable of (u, v) pairs.

        Either orientation may be given; duplicates and self-loops are dropped
        and the adjacency is symmetrized.
        """
        features = np.ascontiguousarray(features, dtype=np.float32)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must be {n} x F, got {features.shape}")
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        mask = edges[:, 0] != edges[:, 1]
        edges = edges[mask]
        both = np.concatenate([edges, edges[:, ::-1]], axis=0)
        keys = np.unique(both[:, 0] * n + both[:, 1])
        src = keys // n
        dst = keys % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError("labels must have length n")
            labels.setflags(write=False)
        if splits is not None:
            splits = {k: np.ascontiguousarray(v, dtype=np.int64) for k, v in splits.items()}
            for k, idx in splits.items():
                if idx.size and (idx.min() < 0 or idx.max() >= n):
                    raise ValueError(f"split {k!r} index out of range")
                idx.setflags(write=False)
        return cls(n=n, indptr=indptr, indices=dst, features=features,
                   labels=labels, splits=splits)

    def validate(self) -> None:
        """Check the structural invariants; raises ValueError on violation."""
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0:
            raise ValueError("malformed indptr")
        if self.indices.size != self.indptr[-1]:
            raise ValueError("indices length disagrees with indptr")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.n:
                raise ValueError("neighbor index out of range")
        for u in range(self.n):
            row = self.neighbors(u)
            if row.size and not np.all(np.diff(row) > 0):
                raise ValueError(f"row {u} not strictly ascending")
            if np.any(row == u):
                raise ValueError(f"self-loop stored at node {u}")
        a = self.adjacency()
        if (a != a.T).nnz != 0:
            raise ValueError("adjacency not symmetric")


@dataclass(frozen=True)
class NormAdj:
    """Symmetrically normalized adjacency with self-loops folded in.

    Entry (i, j) holds 1/sqrt((d_i+1)(d_j+1)) for each stored edge and the
    diagonal holds 1/(d_i+1), d being the loop-free degree.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, self.indices, self.indptr),
                             shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()


def normalized_adjacency(g: Graph) -> NormAdj:
    """Symmetric degree normalization of the adjacency with added self-loops.

    Every graph is valid here; an isolated node's row is the single diagonal
    entry 1.
    """
    a_hat = g.adjacency() + sp.identity(g.n, dtype=np.float64, format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
    norm = sp.diags(inv_sqrt) @ a_hat @ sp.diags(inv_sqrt)
    norm = norm.tocsr()
    norm.sort_indices()
    return NormAdj(n=g.n,
                   indptr=norm.indptr.astype(np.int64),
                   indices=norm.indices.astype(np.int64),
                   weights=norm.data.astype(np.float64))


def propagate_twice(adj: NormAdj, m: np.ndarray) -> np.ndarray:
    """Apply the normalized adjacency twice: returns adj @ (adj @ m).

    Never materializes the squared operator.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != adj.n:
        raise ValueError(f"expected ({adj.n}, F) matrix, got {m.shape}")
    s = adj.matrix()
    return s @ (s @ m)


@dataclass(frozen=True)
class KhopPartition:
    """Within-k / beyond-k classification for a set of source nodes.

    ``within[i]`` holds the nodes at BFS distance 1..k from ``sources[i]``;
    everything else except the source itself is beyond-k (this includes nodes
    in other connected components).
    """

    n: int
    k: int
    sources: np.ndarray
    within: list = field(repr=False)

    def beyond(self, i: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.within[i]] = False
        mask[self.sources[i]] = False
        return np.flatnonzero(mask)


def khop_sets(g: Graph, k: int, max_sources: int | None = None,
              seed: int = 0) -> KhopPartition:
    """BFS shortest-path classification of nodes around each source.

    With ``max_sources`` set and n above it, a seeded uniform sample of source
    nodes is used instead of all nodes (keeps remote-pair work tractable on
    large graphs).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if max_sources is not None and g.n > max_sources:
        sources = np.sort(rng.stream(seed, "khop-sources").choice(
            g.n, size=max_sources, replace=False))
    else:
        sources = np.arange(g.n, dtype=np.int64)
    dist = np.empty(g.n, dtype=np.int64)
    within = []
    for s in sources:
        dist.fill(-1)
        dist[s] = 0
        frontier = np.array([s], dtype=np.int64)
        for depth in range(1, k + 1):
            if frontier.size == 0:
                break
            neigh = np.concatenate([g.neighbors(u) for u in frontier])
            neigh = np.unique(neigh)
            fresh = neigh[dist[neigh] < 0]
            dist[fresh] = depth
            frontier = fresh
        reached = np.flatnonzero(dist > 0)
        within.append(reached)
    return KhopPartition(n=g.n, k=k, sources=sources, within=within)


def minmax_normalize_features(x: np.ndarray) -> np.ndarray:
    """Per-dimension min-max rescaling into [0, 1]; constant columns map to 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    span[span == 0] = 1.0
    return (x - lo) / span


def feature_smoothness(g: Graph, chunk: int = 1_000_000) -> float:
    """Aggregate squared feature difference across edges, per incidence and dim.

    Features are min-max normalized per dimension first. The edge count in the
    denominator is the directed incidence count (each undirected edge twice),
    consistent with summing over every ordered neighbor pair.
    """
    if g.num_incidences == 0:
        raise ValueError("undefined smoothness: graph has no edges")
    x = minmax_normalize_features(g.features)
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    dst = g.indices
    total = 0.0
    for start in range(0, src.size, chunk):
        d = x[src[start:start + chunk]] - x[dst[start:start + chunk]]
        total += float(np.sum(d * d))
    return total / (g.num_incidences * g.num_features)


def avg_clustering_coefficient(g: Graph) -> float:
    """Mean Watts-Strogatz local clustering; degree < 2 nodes contribute 0."""
    if g.n == 0:
        return 0.0
    mark = np.zeros(g.n, dtype=bool)
    total = 0.0
    for u in range(g.n):
        nb = g.neighbors(u)
        d = nb.size
        if d < 2:
            continue
        mark[nb] = True
        links = 0
        for v in nb:
            links += int(mark[g.neighbors(v)].sum())
        mark[nb] = False
        # links counts each closed pair twice (once from each endpoint)
        total += links / (d * (d - 1))
    return total / g.n
