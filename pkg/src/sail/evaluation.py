"""Downstream and diagnostic measurements on frozen node embeddings.

Everything here is a pure read-only pass over the embedding matrix and the
graph: linear-probe classification, k-means clustering scored by NMI,
link-prediction AUC, and the mean-average-distance oversmoothing suite.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from sail import numerics, rng
from sail.graph import (Graph, avg_clustering_coefficient, feature_smoothness,
                        khop_sets)
from sail.losses import _row_scores


def _as_matrix(emb) -> np.ndarray:
    m = np.asarray(getattr(emb, "matrix", emb), dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("embeddings must be a 2-D matrix")
    return m


@dataclass(frozen=True)
class EmbeddingSet:
    """Final node representations plus where they came from."""

    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embeddings contain non-finite values")


# ---------------------------------------------------------------------------
# linear probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    mean_accuracy: float
    std_accuracy: float
    per_seed: tuple

    def summary(self) -> str:
        return f"{100 * self.mean_accuracy:.2f} +- {100 * self.std_accuracy:.2f}"


def _softmax_regression(x, y, num_classes, l2, tol, max_iter, gen):
    """Full-batch gradient descent with adaptive step on the L2-regularized
    multinomial logistic loss. Deterministic for a fixed generator."""
    n, f = x.shape
    w = gen.normal(0.0, 1e-6, size=(f, num_classes))
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0

    def value_grad(wm):
        probs = numerics.rowwise_softmax(x @ wm)
        ce = float(numerics.cross_entropy_rows(onehot, probs).mean())
        # bias row (last) is excluded from the penalty
        val = ce + l2 * float((wm[:-1] ** 2).sum())
        grad = x.T @ (probs - onehot) / n
        grad[:-1] += 2.0 * l2 * wm[:-1]
        return val, grad

    lr = 1.0
    loss, grad = value_grad(w)
    for _ in range(max_iter):
        for _ in range(60):
            cand = w - lr * grad
            new_loss, new_grad = value_grad(cand)
            if new_loss <= loss:
                break
            lr *= 0.5
        else:
            break
        improved = loss - new_loss
        w, loss, grad = cand, new_loss, new_grad
        lr *= 1.25
        if improved <= tol * max(1.0, abs(loss)):
            break
    return w


def linear_probe(emb, labels, splits, eval_split="test", seeds=10, l2=1e-3,
                 tol=1e-6, max_iter=1000) -> ProbeResult:
    """Logistic-regression probe on frozen embeddings.

    Trains on the ``train`` split, scores accuracy on ``eval_split``, and
    repeats over probe seeds (the objective is convex, so the spread is
    expected to be tiny).
    """
    m = _as_matrix(emb)
    if labels is None:
        raise ValueError("labels required for the classification probe")
    if splits is None or "train" not in splits or eval_split not in splits:
        raise ValueError(f"train and {eval_split!r} splits required")
    labels = np.asarray(labels, dtype=np.int64)
    classes, y = np.unique(labels, return_inverse=True)
    tr, ev = splits["train"], splits[eval_split]

    mu = m[tr].mean(axis=0)
    sd = m[tr].std(axis=0)
    sd[sd < 1e-8] = 1.0
    z = (m - mu) / sd
    z = np.column_stack([z, np.ones(len(z))])

    seed_list = range(seeds) if isinstance(seeds, int) else seeds
    accs = []
    for s in seed_list:
        w = _softmax_regression(z[tr], y[tr], len(classes), l2, tol, max_iter,
                                rng.stream(s, "probe-init"))
        pred = np.argmax(z[ev] @ w, axis=1)
        accs.append(float(np.mean(pred == y[ev])))
    accs = np.asarray(accs)
    return ProbeResult(mean_accuracy=float(accs.mean()),
                       std_accuracy=float(accs.std()),
                       per_seed=tuple(accs.tolist()))


# ---------------------------------------------------------------------------
# clustering / NMI
# ---------------------------------------------------------------------------

def nmi_score(a, b) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    cont = np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb) / n
    pa = cont.sum(axis=1)
    pb = cont.sum(axis=0)
    nz = cont > 0
    mi = float((cont[nz] * np.log(cont[nz] / np.outer(pa, pb)[nz])).sum())
    ha = -float((pa[pa > 0] * np.log(pa[pa > 0])).sum())
    hb = -float((pb[pb > 0] * np.log(pb[pb > 0])).sum())
    norm = 0.5 * (ha + hb)
    if norm == 0.0:
        return 0.0
    return mi / norm


def kmeans_nmi(emb, labels, k, seed=0, restarts=10, max_iter=300) -> float:
    """k-means (k-means++ seeding, best of ``restarts`` by inertia) scored by
    NMI against the labels."""
    if k < 2:
        raise ValueError("need at least 2 clusters")
    from sklearn.cluster import KMeans

    m = _as_matrix(emb)
    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts,
                max_iter=max_iter, random_state=seed)
    assignments = km.fit_predict(m)
    return nmi_score(np.asarray(labels), assignments)


# ---------------------------------------------------------------------------
# link prediction AUC
# ---------------------------------------------------------------------------

def auc_from_scores(pos_scores, neg_scores) -> float:
    """Mann-Whitney rank AUC; ties count half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be non-empty")
    combined = np.concatenate([pos, neg])
    values, inverse = np.unique(combined, return_inverse=True)
    counts = np.bincount(inverse)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0  # 1-based average rank per tie group
    rank_sum_pos = float(avg_rank[inverse[:pos.size]].sum())
    p, q = pos.size, neg.size
    return (rank_sum_pos - p * (p + 1) / 2.0) / (p * q)


def pair_scores(emb, pairs, kind="dot") -> np.ndarray:
    m = _as_matrix(emb)
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        return np.empty(0)
    return _row_scores(m[pairs[:, 0]], m[pairs[:, 1]], kind)


def link_auc(emb, pos_pairs, neg_pairs, kind="dot") -> float:
    """AUC of embedding pair scores over held-out positive vs negative pairs."""
    return auc_from_scores(pair_scores(emb, pos_pairs, kind),
                           pair_scores(emb, neg_pairs, kind))


# ---------------------------------------------------------------------------
# mean-average-distance oversmoothing suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MadReport:
    """Cosine-distance smoothness summary over near vs remote node pairs."""

    mad_nei: float
    mad_rmt: float
    mad_gap: float
    mad_ratio: float | None
    nei_pairs: int
    rmt_pairs: int
    n_sources: int

    def to_dict(self) -> dict:
        return asdict(self)


def mad_suite(emb, g: Graph, hop: int = 3, max_sources: int = 500,
              sample_threshold: int = 5000, seed: int = 0) -> MadReport:
    """Mean 1-cosine distance to nodes within ``hop`` steps vs all others.

    Cross-component pairs count as remote. Zero-norm embedding rows are
    excluded with a warning. On graphs above ``sample_threshold`` nodes a
    seeded sample of source nodes is used.
    """
    m = _as_matrix(emb)
    if m.shape[0] != g.n:
        raise ValueError("embedding row count must match the graph")
    norms = np.linalg.norm(m, axis=1)
    valid = norms > 0
    if not valid.all():
        warnings.warn(f"excluding {int((~valid).sum())} zero-norm embedding rows")
    unit = np.zeros_like(m)
    unit[valid] = m[valid] / norms[valid, None]
    total_unit = unit[valid].sum(axis=0)
    n_valid = int(valid.sum())

    part = khop_sets(g, hop,
                     max_sources=max_sources if g.n > sample_threshold else None,
                     seed=seed)
    nei_sum = rmt_sum = 0.0
    nei_cnt = rmt_cnt = 0
    for i, s in enumerate(part.sources):
        if not valid[s]:
            continue
        within = part.within[i]
        w_valid = int(valid[within].sum())
        cos_within = float((unit[within] @ unit[s]).sum()) if within.size else 0.0
        nei_sum += w_valid - cos_within
        nei_cnt += w_valid
        cos_all = float(total_unit @ unit[s])  # includes the self term (=1)
        rmt_sum += (n_valid - cos_all) - (w_valid - cos_within)
        rmt_cnt += n_valid - 1 - w_valid
    if nei_cnt == 0 or rmt_cnt == 0:
        raise ValueError("no qualifying near/remote pairs for MAD")
    mad_nei = nei_sum / nei_cnt
    mad_rmt = rmt_sum / rmt_cnt
    gap = mad_rmt - mad_nei
    ratio = gap / mad_nei if mad_nei > 0 else None
    return MadReport(mad_nei=mad_nei, mad_rmt=mad_rmt, mad_gap=gap,
                     mad_ratio=ratio, nei_pairs=nei_cnt, rmt_pairs=rmt_cnt,
                     n_sources=len(part.sources))


# ---------------------------------------------------------------------------
# raw-data diagnostics
# ---------------------------------------------------------------------------

def dataset_diagnostics(g: Graph) -> dict:
    """Feature smoothness and structural locality of the raw dataset.

    ``inverse_smoothness`` is +inf when features are constant across every
    edge; normalize across a dataset collection for plotting.
    """
    lam = feature_smoothness(g)
    return {
        "feature_smoothness": lam,
        "inverse_smoothness": float("inf") if lam == 0 else 1.0 / lam,
        "clustering_coefficient": avg_clustering_coefficient(g),
    }


def normalize_inverse_smoothness(values) -> list:
    """Rescale a collection of 1/smoothness values into [0, 1] by the largest
    finite value; infinities map to 1.0."""
    finite = [v for v in values if np.isfinite(v)]
    top = max(finite) if finite else 1.0
    if top <= 0:
        top = 1.0
    return [1.0 if not np.isfinite(v) else v / top for v in values]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    dataset: str
    task: str
    value: float
    std: float | None = None
    seed_count: int | None = None
    config_hash: str | None = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def metrics_table_csv(reports) -> str:
    """Task-by-dataset grid of "value (+- std)" cells, one row per task."""
    datasets = sorted({r.dataset for r in reports})
    tasks = sorted({r.task for r in reports})
    cell = {}
    for r in reports:
        text = f"{r.value:.4f}"
        if r.std is not None:
            text += f" +- {r.std:.4f}"
        cell[(r.task, r.dataset)] = text
    lines = ["task," + ",".join(datasets)]
    for t in tasks:
        lines.append(",".join([t] + [cell.get((t, d), "") for d in datasets]))
    return "\n".join(lines) + "\n"
