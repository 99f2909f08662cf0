import numpy as np
import pytest

from sail import rng
from sail.graph import Graph


def make_random_graph(seed, n, p=0.25, feat_dim=5, labels=False, feature_scale=1.0):
    """Erdos-Renyi-ish test graph with gaussian features; isolated nodes allowed."""
    gen = rng.stream(seed, "test-graph")
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if gen.random() < p:
                edges.append((u, v))
    x = gen.normal(0, feature_scale, size=(n, feat_dim))
    lab = gen.integers(0, 3, size=n) if labels else None
    return Graph.build(n, edges, x, labels=lab)


def graph_from_edges(n, edges, feat_dim=4, seed=0):
    gen = rng.stream(seed, "test-feats")
    return Graph.build(n, edges, gen.normal(0, 1, size=(n, feat_dim)))


def dense_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for u in range(g.n):
        a[u, g.neighbors(u)] = 1.0
    return a


def dense_norm_adj_oracle(a: np.ndarray) -> np.ndarray:
    """Dense-matrix oracle for the normalized adjacency."""
    a_hat = a + np.eye(len(a))
    d = a_hat.sum(axis=1)
    inv = 1.0 / np.sqrt(d)
    return inv[:, None] * a_hat * inv[None, :]


def loop_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scalar-loop matrix multiply, independent of any BLAS path."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hand BFS oracle; -1 for unreachable nodes."""
    from collections import deque

    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


@pytest.fixture
def toy_graph():
    from sail.dataset import load_dataset, toy_dataset_path

    return load_dataset(toy_dataset_path())


def assert_rel_close(actual, expected, rtol, what=""):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    denom = np.maximum(np.abs(expected), 1e-12)
    err = float(np.max(np.abs(actual - expected) / denom)) if actual.size else 0.0
    assert err < rtol, f"{what}: relative error {err:.3e} >= {rtol:.1e}"
