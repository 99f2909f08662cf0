"""Single-layer graph-convolutional encoder and teacher/student parameter lifecycle.

One forward pass produces both self-augmented views: the low-level linear
transform of the features and the twice-propagated, activated representation.
"""

import copy
from dataclasses import dataclass

import numpy as np

from sail import numerics
from sail.graph import Graph, NormAdj, propagate_twice


@dataclass
class Params:
    """Encoder weight matrix, feature dim x embedding dim, 64-bit."""

    w: np.ndarray

    def copy(self) -> "Params":
        return Params(w=self.w.copy())


@dataclass(frozen=True)
class Views:
    """The two self-augmented representations from one forward pass.

    ``low`` is the linear feature transform X @ W; ``smoothed`` is the
    activated second-order propagation of ``low``.
    """

    low: np.ndarray
    smoothed: np.ndarray


def init_params(num_features: int, embed_dim: int, gen) -> Params:
    return Params(w=numerics.glorot_uniform(num_features, embed_dim, gen))


def feature_matrix(g: Graph, row_normalize: bool) -> np.ndarray:
    """Float64 feature matrix, optionally L1 row-normalized (zero rows kept)."""
    x = np.asarray(g.features, dtype=np.float64)
    if row_normalize:
        norms = np.abs(x).sum(axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        x = x / norms
    return x


def forward(p: Params, g: Graph, adj: NormAdj, activation: str = "relu",
            x: np.ndarray | None = None) -> Views:
    """Encode the graph; differentiable w.r.t. the weights.

    ``x`` lets callers pass a preprocessed float64 feature matrix; by default
    the graph's raw features are used unnormalized.
    """
    if x is None:
        x = np.asarray(g.features, dtype=np.float64)
    if x.shape[1] != p.w.shape[0]:
        raise ValueError(f"feature width {x.shape[1]} != weight rows {p.w.shape[0]}")
    act, _ = numerics.activation(activation)
    low = numerics.matmul(x, p.w)
    smoothed = act(propagate_twice(adj, low))
    return Views(low=low, smoothed=smoothed)


def copy_to_teacher(student: Params) -> Params:
    """Deep copy; later student updates never reach the teacher."""
    return copy.deepcopy(student)


def fade_student(student: Params, w: float, gen) -> Params:
    """Blend the weights with fresh init noise: w * theta + (1 - w) * noise.

    Noise is drawn per coordinate from the same scaled-uniform law used at
    initialization, so a fully faded model (w=0) is a fresh init sample.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fade weight must be in [0, 1], got {w}")
    noise = numerics.glorot_uniform(student.w.shape[0], student.w.shape[1], gen)
    return Params(w=w * student.w + (1.0 - w) * noise)
