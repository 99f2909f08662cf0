"""The contrastive objective: edge ranking loss plus the two distillation terms.

All terms are mean-normalized so the regularization weight transfers across
graph sizes. Teacher-side quantities (the intra similarity rows and the CRF
targets) are frozen per step: gradients never flow through them. Gradients
are hand-chained from the numerics primitives; the finite-difference suite in
the tests is the correctness authority.
"""

from dataclasses import dataclass

import numpy as np

from sail import numerics
from sail.encoder import Views
from sail.graph import Graph, NormAdj, propagate_twice

_TRIPLE_CHUNK = 16384
_NODE_CHUNK = 2048
_NORM_EPS = 1e-12

SCORE_KINDS = ("dot", "cosine")


def score(u: np.ndarray, v: np.ndarray, kind: str = "dot") -> float:
    """Scalar similarity of two vectors."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError("score arguments must have equal length")
    return float(_row_scores(u[None, :], v[None, :], kind)[0])


def _row_scores(a, b, kind):
    if kind == "dot":
        return np.einsum("ij,ij->i", a, b)
    if kind == "cosine":
        na = np.maximum(np.linalg.norm(a, axis=1), _NORM_EPS)
        nb = np.maximum(np.linalg.norm(b, axis=1), _NORM_EPS)
        return np.einsum("ij,ij->i", a, b) / (na * nb)
    raise ValueError(f"unknown score kind {kind!r}; choices: {SCORE_KINDS}")


def _row_score_vjp(coeff, a, b, kind):
    """Per-row gradients of coeff * score(a_row, b_row) w.r.t. both rows."""
    if kind == "dot":
        return coeff[:, None] * b, coeff[:, None] * a
    na = np.maximum(np.linalg.norm(a, axis=1), _NORM_EPS)
    nb = np.maximum(np.linalg.norm(b, axis=1), _NORM_EPS)
    psi = np.einsum("ij,ij->i", a, b) / (na * nb)
    ga = coeff[:, None] * (b / (na * nb)[:, None] - (psi / na ** 2)[:, None] * a)
    gb = coeff[:, None] * (a / (na * nb)[:, None] - (psi / nb ** 2)[:, None] * b)
    return ga, gb


@dataclass(frozen=True)
class LossBreakdown:
    """One evaluation of the training objective, itemized."""

    edge_mi: float
    r_intra: float
    r_inter: float
    total: float
    reg_weight: float

    def to_dict(self) -> dict:
        return {"edge_mi": self.edge_mi, "r_intra": self.r_intra,
                "r_inter": self.r_inter, "total": self.total}


@dataclass
class FrozenTargets:
    """Stop-gradient quantities captured once per optimization step."""

    intra_teacher: np.ndarray | None = None   # (n, d) probability rows
    inter_low: np.ndarray | None = None       # CRF target for the low view
    inter_smoothed: np.ndarray | None = None  # CRF target for the smoothed view


# ---------------------------------------------------------------------------
# edge ranking term
# ---------------------------------------------------------------------------

def edge_mi_loss(views: Views, triples: np.ndarray, kind: str = "dot") -> float:
    if triples.shape[0] == 0:
        raise ValueError("empty triple list")
    total = 0.0
    for lo in range(0, triples.shape[0], _TRIPLE_CHUNK):
        t = triples[lo:lo + _TRIPLE_CHUNK]
        h_a = views.smoothed[t[:, 0]]
        margin = (_row_scores(h_a, views.low[t[:, 1]], kind)
                  - _row_scores(h_a, views.low[t[:, 2]], kind))
        total -= float(numerics.log_sigmoid(margin).sum())
    return total / triples.shape[0]


def _edge_mi_grads(views, triples, kind, g_low, g_smoothed):
    n = views.low.shape[0]
    count = triples.shape[0]
    total = 0.0
    for lo in range(0, count, _TRIPLE_CHUNK):
        t = triples[lo:lo + _TRIPLE_CHUNK]
        anchors, linked, negs = t[:, 0], t[:, 1], t[:, 2]
        h_a = views.smoothed[anchors]
        x_j = views.low[linked]
        x_k = views.low[negs]
        margin = _row_scores(h_a, x_j, kind) - _row_scores(h_a, x_k, kind)
        total -= float(numerics.log_sigmoid(margin).sum())
        coeff = -1.0 / (1.0 + np.exp(margin)) / count  # d(-logsig)/dmargin / T
        ga_pos, gj = _row_score_vjp(coeff, h_a, x_j, kind)
        ga_neg, gk = _row_score_vjp(-coeff, h_a, x_k, kind)
        g_smoothed += numerics.segment_rowsum(n, anchors, ga_pos + ga_neg)
        g_low += numerics.segment_rowsum(n, linked, gj)
        g_low += numerics.segment_rowsum(n, negs, gk)
    return total / count


# ---------------------------------------------------------------------------
# intra-model distillation term
# ---------------------------------------------------------------------------

def intra_distill(views: Views, ls_sets: np.ndarray, kind: str = "dot",
                  teacher_probs: np.ndarray | None = None):
    """Cross entropy between the two similarity distributions over each
    pseudo local set; returns (value, teacher_probs).

    The teacher rows (smoothed-vs-low similarities) act as constants; pass
    ``teacher_probs`` back in to re-evaluate against fixed targets.
    """
    return _intra_pass(views, ls_sets, kind, teacher_probs, g_low=None)


def _intra_pass(views, ls_sets, kind, teacher_probs, g_low):
    n, d = ls_sets.shape
    if n != views.low.shape[0]:
        raise ValueError("one pseudo local set per node is required")
    out_teacher = None if teacher_probs is not None else np.empty((n, d))
    ce_sum = 0.0
    for lo in range(0, n, _NODE_CHUNK):
        nodes = np.arange(lo, min(lo + _NODE_CHUNK, n), dtype=np.int64)
        crep = np.repeat(nodes, d)
        mem = ls_sets[nodes].ravel()
        b = nodes.size
        if teacher_probs is None:
            t_scores = _row_scores(views.smoothed[crep], views.low[mem], kind)
            st = numerics.rowwise_softmax(t_scores.reshape(b, d))
            out_teacher[nodes] = st
        else:
            st = teacher_probs[nodes]
        s_scores = _row_scores(views.low[crep], views.low[mem], kind)
        ss = numerics.rowwise_softmax(s_scores.reshape(b, d))
        ce_sum += float(numerics.cross_entropy_rows(st, ss).sum())
        if g_low is not None:
            coeff = ((ss - st) / n).ravel()
            gc, gm = _row_score_vjp(coeff, views.low[crep], views.low[mem], kind)
            g_low += numerics.segment_rowsum(n, crep, gc)
            g_low += numerics.segment_rowsum(n, mem, gm)
    return ce_sum / n, (teacher_probs if teacher_probs is not None else out_teacher)


# ---------------------------------------------------------------------------
# inter-model (teacher to student) distillation term
# ---------------------------------------------------------------------------

def crf_target(h_teacher: np.ndarray, m_student: np.ndarray, g: Graph,
               alpha: float) -> np.ndarray:
    """Mean-field target mixing the teacher row with the student neighbor mean.

    With mean-pooling weights the mix is exact: (1-alpha) * teacher row +
    alpha * neighbor mean. Isolated nodes take the teacher row unchanged. The
    result is a constant target; no gradient flows through it.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if h_teacher.shape != m_student.shape:
        raise ValueError("teacher/student shape mismatch")
    if alpha == 0.0:
        return h_teacher.copy()
    deg = g.degrees
    nb_sum = g.adjacency() @ m_student
    safe = np.maximum(deg, 1)[:, None].astype(np.float64)
    nb_mean = nb_sum / safe
    if alpha == 1.0:
        z = nb_mean
    else:
        z = (1.0 - alpha) * h_teacher + alpha * nb_mean
    isolated = deg == 0
    if isolated.any():
        z[isolated] = h_teacher[isolated]
    return z


def inter_distill(h_teacher: np.ndarray, views_s: Views, g: Graph, alpha: float,
                  targets: tuple | None = None):
    """Squared-distance regression of both student views onto their CRF targets.

    Returns (value, (target_low, target_smoothed)); pass ``targets`` back in
    to re-evaluate against the same frozen targets.
    """
    if h_teacher.shape != views_s.low.shape:
        raise ValueError("teacher and student widths must match")
    if targets is None:
        targets = (crf_target(h_teacher, views_s.low, g, alpha),
                   crf_target(h_teacher, views_s.smoothed, g, alpha))
    z_low, z_sm = targets
    kd_low = float(numerics.squared_row_distance(views_s.low, z_low).mean())
    kd_sm = float(numerics.squared_row_distance(views_s.smoothed, z_sm).mean())
    return kd_low + kd_sm, targets


# ---------------------------------------------------------------------------
# combination and the full hand-chained gradient
# ---------------------------------------------------------------------------

def total_loss(views_s: Views, h_teacher: np.ndarray | None, triples, ls_sets,
               g: Graph, alpha: float, reg_weight: float, kind: str = "dot",
               intra_on: bool = True, inter_on: bool = True,
               frozen: FrozenTargets | None = None):
    """Combined objective; returns (LossBreakdown, FrozenTargets).

    ``h_teacher`` may be None during pretraining, which skips the
    inter-distillation term entirely.
    """
    frozen = frozen or FrozenTargets()
    edge = edge_mi_loss(views_s, triples, kind)
    r_intra = 0.0
    if intra_on:
        r_intra, frozen.intra_teacher = intra_distill(
            views_s, ls_sets, kind, frozen.intra_teacher)
    r_inter = 0.0
    if inter_on and h_teacher is not None:
        pair = (None if frozen.inter_low is None
                else (frozen.inter_low, frozen.inter_smoothed))
        r_inter, (frozen.inter_low, frozen.inter_smoothed) = inter_distill(
            h_teacher, views_s, g, alpha, pair)
    total = edge + reg_weight * (r_intra + r_inter)
    return (LossBreakdown(edge_mi=edge, r_intra=r_intra, r_inter=r_inter,
                          total=total, reg_weight=reg_weight), frozen)


def loss_and_grad(w: np.ndarray, x: np.ndarray, g: Graph, adj: NormAdj,
                  triples, ls_sets, h_teacher, *, alpha, reg_weight,
                  activation="relu", kind="dot", intra_on=True, inter_on=True,
                  frozen: FrozenTargets | None = None):
    """Objective value and its gradient w.r.t. the encoder weights.

    Returns (LossBreakdown, grad_w, FrozenTargets). When ``frozen`` is None
    the stop-gradient targets are captured from the current parameters, which
    is the per-step training semantics.
    """
    act, act_deriv = numerics.activation(activation)
    low = numerics.matmul(x, w)
    pre = propagate_twice(adj, low)
    views = Views(low=low, smoothed=act(pre))
    n, fp = low.shape

    frozen = frozen or FrozenTargets()
    g_low = np.zeros((n, fp))
    g_smoothed = np.zeros((n, fp))

    edge = _edge_mi_grads(views, triples, kind, g_low, g_smoothed)

    r_intra = 0.0
    if intra_on:
        g_low_intra = np.zeros((n, fp))
        r_intra, frozen.intra_teacher = _intra_pass(
            views, ls_sets, kind, frozen.intra_teacher, g_low_intra)
        g_low += reg_weight * g_low_intra

    r_inter = 0.0
    if inter_on and h_teacher is not None:
        pair = (None if frozen.inter_low is None
                else (frozen.inter_low, frozen.inter_smoothed))
        r_inter, (frozen.inter_low, frozen.inter_smoothed) = inter_distill(
            h_teacher, views, g, alpha, pair)
        g_low += reg_weight * (2.0 / n) * (views.low - frozen.inter_low)
        g_smoothed += reg_weight * (2.0 / n) * (views.smoothed - frozen.inter_smoothed)

    # back through the encoder: smoothed = act(adj^2 @ low), low = x @ w
    g_pre = g_smoothed * act_deriv(pre)
    s_t = adj.matrix().T
    g_low += s_t @ (s_t @ g_pre)
    grad_w = x.T @ g_low

    total = edge + reg_weight * (r_intra + r_inter)
    breakdown = LossBreakdown(edge_mi=edge, r_intra=r_intra, r_inter=r_inter,
                              total=total, reg_weight=reg_weight)
    return breakdown, grad_w, frozen


def loss_value(w, x, g, adj, triples, ls_sets, h_teacher, *, alpha, reg_weight,
               activation="relu", kind="dot", intra_on=True, inter_on=True,
               frozen: FrozenTargets | None = None) -> LossBreakdown:
    """Value-only twin of loss_and_grad, for finite-difference verification."""
    act, _ = numerics.activation(activation)
    low = numerics.matmul(x, w)
    views = Views(low=low, smoothed=act(propagate_twice(adj, low)))
    breakdown, _ = total_loss(views, h_teacher, triples, ls_sets, g, alpha,
                              reg_weight, kind, intra_on, inter_on, frozen)
    return breakdown
