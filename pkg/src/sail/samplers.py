"""Seeded samplers for contrastive triples, pseudo local sets and eval negatives.

Each sampler is a pure function of its generator, so a fixed (seed, tag,
epoch) key reproduces the exact sample stream on any platform.
"""

import warnings

import numpy as np

from sail.graph import Graph


def _membership(keys_sorted: np.ndarray, u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Vectorized edge-membership test against sorted u*n+v keys."""
    probe = u * n + v
    if keys_sorted.size == 0:
        return np.zeros(probe.shape, dtype=bool)
    pos = np.minimum(np.searchsorted(keys_sorted, probe), keys_sorted.size - 1)
    return keys_sorted[pos] == probe


def sample_triples(g: Graph, negatives_per_edge: int, gen) -> np.ndarray:
    """(T, 3) int64 triples (anchor, linked, negative).

    Both orientations of every undirected edge produce ``negatives_per_edge``
    triples; negatives are uniform over non-neighbors, rejecting the anchor's
    neighborhood and the anchor itself. Anchors adjacent to every other node
    are skipped with a warning.
    """
    if negatives_per_edge < 1:
        raise ValueError("negatives_per_edge must be >= 1")
    k = negatives_per_edge
    deg = g.degrees
    src = np.repeat(np.arange(g.n, dtype=np.int64), deg)
    dst = g.indices.astype(np.int64)
    saturated = deg[src] >= g.n - 1
    if saturated.any():
        warnings.warn(f"skipped {int(saturated.sum())} directed edges whose anchor "
                      "is adjacent to all other nodes (no valid negative)")
        src, dst = src[~saturated], dst[~saturated]
    anchors = np.repeat(src, k)
    linked = np.repeat(dst, k)
    negatives = np.empty(anchors.size, dtype=np.int64)
    keys = g.edge_keys()
    pending = np.arange(anchors.size)
    while pending.size:
        cand = gen.integers(0, g.n, size=pending.size, dtype=np.int64)
        a = anchors[pending]
        ok = (cand != a) & ~_membership(keys, a, cand, g.n)
        negatives[pending[ok]] = cand[ok]
        pending = pending[~ok]
    return np.column_stack([anchors, linked, negatives])


def sample_pseudo_local(n: int, d: int, gen) -> np.ndarray:
    """(n, d) int64 members, one uniform without-replacement set per center.

    The center node is excluded from its own set; sets are independent across
    centers. Uses batched rejection with a per-row fallback for tiny graphs.
    """
    if not 1 <= d <= n - 1:
        raise ValueError(f"need 1 <= d <= n-1, got d={d}, n={n}")
    m = d + max(8, d)
    draws = gen.integers(0, n - 1, size=(n, m), dtype=np.int64)
    draws += draws >= np.arange(n, dtype=np.int64)[:, None]  # skip the center
    order = np.argsort(draws, axis=1, kind="stable")
    srt = np.take_along_axis(draws, order, axis=1)
    first = np.ones_like(srt, dtype=bool)
    first[:, 1:] = srt[:, 1:] != srt[:, :-1]
    # pick d of the distinct values uniformly via random tiebreak keys
    keys = np.where(first, gen.random(size=(n, m)), 2.0)
    sel = np.argsort(keys, axis=1, kind="stable")[:, :d]
    members = np.take_along_axis(srt, sel, axis=1)
    short = np.flatnonzero(first.sum(axis=1) < d)
    for i in short:
        row = gen.choice(n - 1, size=d, replace=False).astype(np.int64)
        row += row >= i
        members[i] = row
    return members


def sample_eval_negatives(g: Graph, m: int, gen) -> np.ndarray:
    """(m, 2) distinct uniform non-edges with u < v; no self-pairs."""
    if m == 0:
        return np.empty((0, 2), dtype=np.int64)
    possible = g.n * (g.n - 1) // 2 - g.num_undirected_edges
    if possible < m:
        raise ValueError(f"requested {m} non-edges but only {possible} exist")
    keys = g.edge_keys()
    seen: set[int] = set()
    chosen: list[int] = []
    while len(chosen) < m:
        want = max(m - len(chosen), 16)
        u = gen.integers(0, g.n, size=2 * want, dtype=np.int64)
        v = gen.integers(0, g.n, size=2 * want, dtype=np.int64)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        ok = (lo != hi) & ~_membership(keys, lo, hi, g.n)
        # dedupe in arrival order so the sample stays uniform without replacement
        for key in (lo[ok] * g.n + hi[ok]).tolist():
            if key not in seen:
                seen.add(key)
                chosen.append(key)
                if len(chosen) == m:
                    break
    pairs = np.asarray(chosen, dtype=np.int64)
    return np.column_stack([pairs // g.n, pairs % g.n])
