"""Training loop: pretraining, the periodic teacher-copy/noise-fade schedule,
full-batch optimization and checkpointing.

One optimizer step runs per epoch (full-graph forward); the teacher is frozen
between refreshes so its output is computed once per refresh and cached.
Sample streams are keyed by (seed, purpose, epoch), which makes resume from a
checkpoint bitwise-equivalent to an uninterrupted run.
"""

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from sail import checkpoint as ckpt
from sail import losses, rng
from sail.encoder import (Params, copy_to_teacher, fade_student, feature_matrix,
                          forward, init_params)
from sail.graph import Graph, NormAdj, normalized_adjacency
from sail import numerics
from sail.samplers import sample_pseudo_local, sample_triples


class TrainingDiverged(RuntimeError):
    """Raised when the objective stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """All run hyperparameters; defaults are the acceptance-run settings."""

    embed_dim: int = 512
    lr: float = 1e-3
    epochs: int = 500
    pretrain_epochs: int = 200
    teacher_period: int = 30
    fade_weight: float = 0.99
    crf_alpha: float = 0.5
    reg_weight: float = 0.5
    negatives_per_edge: int = 5
    pseudo_local_size: int = 10
    seed: int = 0
    activation: str = "relu"
    score: str = "dot"
    row_normalize_features: bool = True
    inner_steps: int = 1
    intra_enabled: bool = True
    inter_enabled: bool = True

    def validate(self) -> None:
        if self.teacher_period < 1:
            raise ValueError("teacher_period must be >= 1")
        if not 0.0 <= self.fade_weight <= 1.0:
            raise ValueError("fade_weight must be in [0, 1]")
        if not 0.0 <= self.crf_alpha <= 1.0:
            raise ValueError("crf_alpha must be in [0, 1]")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        for name in ("embed_dim", "negatives_per_edge", "pseudo_local_size",
                     "inner_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        numerics.activation(self.activation)
        if self.score not in losses.SCORE_KINDS:
            raise ValueError(f"unknown score {self.score!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        import hashlib

        canon = ";".join(f"{k}={v!r}" for k, v in sorted(self.to_dict().items()))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class TrainState:
    """Student + optimizer, frozen teacher, epoch counter and loss history."""

    student: Params
    adam: numerics.AdamState
    teacher: Params | None = None
    epoch: int = 0
    history: list = field(default_factory=list)


def prepare_inputs(g: Graph, cfg: TrainConfig):
    """Preprocessed float64 features and the normalized adjacency."""
    return feature_matrix(g, cfg.row_normalize_features), normalized_adjacency(g)


def embeddings(g: Graph, cfg: TrainConfig, params: Params,
               x: np.ndarray | None = None,
               adj: NormAdj | None = None) -> np.ndarray:
    """Final node representations (the smoothed view) for evaluation."""
    if x is None or adj is None:
        x, adj = prepare_inputs(g, cfg)
    return forward(params, g, adj, cfg.activation, x=x).smoothed


def _epoch_samples(g: Graph, cfg: TrainConfig, epoch: int):
    triples = sample_triples(g, cfg.negatives_per_edge,
                             rng.stream(cfg.seed, "triples", epoch))
    ls_sets = sample_pseudo_local(g.n, cfg.pseudo_local_size,
                                  rng.stream(cfg.seed, "pseudo", epoch))
    return triples, ls_sets


def _step(w, x, g, adj, triples, ls_sets, h_teacher, cfg, adam,
          inter_on, epoch, phase):
    breakdown = None
    for _ in range(cfg.inner_steps):
        try:
            breakdown, grad, _ = losses.loss_and_grad(
                w, x, g, adj, triples, ls_sets, h_teacher,
                alpha=cfg.crf_alpha, reg_weight=cfg.reg_weight,
                activation=cfg.activation, kind=cfg.score,
                intra_on=cfg.intra_enabled, inter_on=inter_on)
        except numerics.NonFiniteError as exc:
            raise TrainingDiverged(
                f"{phase} diverged at epoch {epoch}: {exc}") from exc
        if not np.isfinite(breakdown.total):
            raise TrainingDiverged(
                f"{phase} diverged at epoch {epoch}: total={breakdown.total}")
        w, _ = numerics.adam_step(w, grad, adam)
    return w, breakdown


def pretrain(g: Graph, cfg: TrainConfig, log_fn=None) -> Params:
    """Optimize the objective without the cross-model term; the result seeds
    both the student and the first teacher."""
    cfg.validate()
    x, adj = prepare_inputs(g, cfg)
    params = init_params(x.shape[1], cfg.embed_dim, rng.stream(cfg.seed, "init"))
    adam = numerics.AdamState.init(params.w.shape, lr=cfg.lr)
    for epoch in range(1, cfg.pretrain_epochs + 1):
        started = time.perf_counter()
        triples, ls_sets = _epoch_samples(g, cfg, epoch)
        params.w, breakdown = _step(params.w, x, g, adj, triples, ls_sets,
                                    None, cfg, adam, False, epoch, "pretrain")
        if log_fn is not None:
            log_fn({"phase": "pretrain", "epoch": epoch,
                    **breakdown.to_dict(),
                    "wall_time": time.perf_counter() - started,
                    "teacher_refreshed": False})
    return params


def train(g: Graph, cfg: TrainConfig, log_fn=None,
          initial: Params | None = None) -> TrainState:
    """Full run: pretraining followed by the distillation loop.

    Returns the final state; the learned encoder is ``state.student``.
    """
    cfg.validate()
    student = initial.copy() if initial is not None else pretrain(g, cfg, log_fn)
    state = TrainState(student=student,
                       adam=numerics.AdamState.init(student.w.shape, lr=cfg.lr),
                       teacher=copy_to_teacher(student), epoch=0)
    return _distill_loop(g, cfg, state, log_fn)


def resume(g: Graph, cfg: TrainConfig, state: TrainState,
           log_fn=None) -> TrainState:
    """Continue a checkpointed run; equivalent to never having stopped."""
    cfg.validate()
    if state.teacher is None:
        raise ValueError("cannot resume: checkpoint lacks a teacher")
    return _distill_loop(g, cfg, state, log_fn)


def _distill_loop(g: Graph, cfg: TrainConfig, state: TrainState, log_fn=None):
    x, adj = prepare_inputs(g, cfg)
    h_teacher = forward(state.teacher, g, adj, cfg.activation, x=x).smoothed
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        started = time.perf_counter()
        refreshed = epoch % cfg.teacher_period == 0
        if refreshed:
            state.teacher = copy_to_teacher(state.student)
            state.student = fade_student(state.student, cfg.fade_weight,
                                         rng.stream(cfg.seed, "fade", epoch))
            state.adam.reset()  # moment estimates are stale after the fade
            h_teacher = forward(state.teacher, g, adj, cfg.activation, x=x).smoothed
        triples, ls_sets = _epoch_samples(g, cfg, epoch)
        state.student.w, breakdown = _step(
            state.student.w, x, g, adj, triples, ls_sets, h_teacher, cfg,
            state.adam, cfg.inter_enabled, epoch, "distill")
        state.epoch = epoch
        record = {"phase": "distill", "epoch": epoch, **breakdown.to_dict(),
                  "wall_time": time.perf_counter() - started,
                  "teacher_refreshed": refreshed}
        state.history.append(record)
        if log_fn is not None:
            log_fn(record)
    return state


# ---------------------------------------------------------------------------
# state checkpointing
# ---------------------------------------------------------------------------

def save_state(state: TrainState, path) -> None:
    tensors = {
        "student.W": state.student.w,
        "adam.m": state.adam.m,
        "adam.v": state.adam.v,
        "adam.t": ckpt.save_scalar(state.adam.t),
        "epoch": ckpt.save_scalar(state.epoch),
    }
    if state.teacher is not None:
        tensors["teacher.W"] = state.teacher.w
    ckpt.save_tensors(path, tensors)


def load_state(path, cfg: TrainConfig) -> TrainState:
    tensors = ckpt.load_tensors(path)
    for required in ("student.W", "adam.m", "adam.v", "adam.t", "epoch"):
        if required not in tensors:
            raise ckpt.CheckpointError(f"{path}: missing tensor {required!r}")
    adam = numerics.AdamState.init(tensors["student.W"].shape, lr=cfg.lr)
    adam.m = tensors["adam.m"]
    adam.v = tensors["adam.v"]
    adam.t = int(ckpt.load_scalar(tensors["adam.t"]))
    teacher = Params(w=tensors["teacher.W"]) if "teacher.W" in tensors else None
    return TrainState(student=Params(w=tensors["student.W"]), adam=adam,
                      teacher=teacher,
                      epoch=int(ckpt.load_scalar(tensors["epoch"])))


# ---------------------------------------------------------------------------
# hyperparameter grid sweep
# ---------------------------------------------------------------------------

ALPHA_GRID = (0.0, 0.1, 0.5, 1.0)
LAMBDA_GRID = (0.0, 0.1, 0.5, 1.0)


@dataclass
class SweepResult:
    best_config: TrainConfig
    best_state: TrainState
    best_val_accuracy: float
    table: list  # one {"crf_alpha", "reg_weight", "val_accuracy"} row per point


def sweep(g: Graph, cfg: TrainConfig, alphas=ALPHA_GRID, lambdas=LAMBDA_GRID,
          probe_seeds=3, log_fn=None) -> SweepResult:
    """Grid search over the mixing and regularization weights, selected by
    validation-split probe accuracy on the learned embeddings."""
    from sail.evaluation import linear_probe

    if g.labels is None or g.splits is None or "val" not in g.splits:
        raise ValueError("sweep requires labels and a val split")
    best = None
    table = []
    for alpha in alphas:
        for lam in lambdas:
            point = replace(cfg, crf_alpha=alpha, reg_weight=lam)
            state = train(g, point, log_fn=log_fn)
            emb = embeddings(g, point, state.student)
            probe = linear_probe(emb, g.labels, g.splits, eval_split="val",
                                 seeds=probe_seeds)
            table.append({"crf_alpha": alpha, "reg_weight": lam,
                          "val_accuracy": probe.mean_accuracy})
            if best is None or probe.mean_accuracy > best[0]:
                best = (probe.mean_accuracy, point, state)
    return SweepResult(best_config=best[1], best_state=best[2],
                       best_val_accuracy=best[0], table=table)
