"""Minimal differentiable numeric layer.

Each primitive is a pure forward function paired with a vector-Jacobian
product. Gradients for the composite losses are hand-chained from these; the
finite-difference checker below is the correctness authority for all of them.
Training numerics are 64-bit throughout.
"""

from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(ValueError):
    """A numeric operation produced or received a non-finite value."""


def _require_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))[0]
        coord = tuple(int(c) for c in bad)
        raise NonFiniteError(f"non-finite value in {what} at coordinate {coord}")
    return arr


# ---------------------------------------------------------------------------
# primitives and their VJPs
# ---------------------------------------------------------------------------

def matmul(a, b):
    return _require_finite(a @ b, "matmul output")


def matmul_vjp(grad, a, b):
    return grad @ b.T, a.T @ grad


def sparse_dense_matmul(adj, m):
    """Normalized-adjacency times dense matrix."""
    return _require_finite(adj.matrix() @ m, "sparse_dense_matmul output")


def sparse_dense_matmul_vjp(grad, adj):
    # gradient w.r.t. the dense factor only; graph structure is not differentiable
    return adj.matrix().T @ grad


def add(a, b):
    return a + b


def add_vjp(grad):
    return grad, grad


def relu(x):
    return np.maximum(x, 0.0)


def relu_deriv(x):
    return (x > 0).astype(np.float64)


def tanh(x):
    return np.tanh(x)


def tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "relu": (relu, relu_deriv),
    "tanh": (tanh, tanh_deriv),
}


def activation(name: str):
    """Forward/derivative pair for a configured activation name."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choices: {sorted(ACTIVATIONS)}")


def rowwise_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def rowwise_softmax_vjp(grad, probs):
    inner = (grad * probs).sum(axis=-1, keepdims=True)
    return probs * (grad - inner)


PROB_EPS = 1e-12  # clamp for log arguments inside cross-entropy


def cross_entropy_rows(target, probs):
    """Per-row cross entropy -sum(t * ln p) with probabilities clamped at 1e-12."""
    return -(target * np.log(np.maximum(probs, PROB_EPS))).sum(axis=-1)


def softmax_cross_entropy_logits_vjp(grad_rows, probs, target):
    """VJP of cross_entropy_rows(target, rowwise_softmax(logits)) w.r.t. logits.

    Valid whenever target rows sum to 1 and the target carries no gradient.
    """
    return grad_rows[..., None] * (probs - target)


def log_sigmoid(x):
    # stable: min(x, 0) - log1p(exp(-|x|))
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def log_sigmoid_vjp(grad, x):
    return grad / (1.0 + np.exp(x))  # sigmoid(-x) * grad


def squared_row_distance(a, b):
    d = a - b
    return (d * d).sum(axis=-1)


def squared_row_distance_vjp(grad_rows, a, b):
    g = 2.0 * grad_rows[..., None] * (a - b)
    return g, -g


def total_sum(a):
    return float(a.sum())


def total_sum_vjp(grad, shape):
    return np.full(shape, grad, dtype=np.float64)


def total_mean(a):
    return float(a.mean())


def total_mean_vjp(grad, shape):
    return np.full(shape, grad / np.prod(shape), dtype=np.float64)


def segment_rowsum(n, rows, values):
    """Scatter-add ``values`` into an (n, F) accumulator at row indices ``rows``.

    Sparse-matrix formulation of np.add.at, which is far faster for the large
    index arrays the losses produce.
    """
    import scipy.sparse as sp

    rows = np.asarray(rows, dtype=np.int64)
    t = rows.size
    if t == 0:
        return np.zeros((n, values.shape[1]), dtype=np.float64)
    sel = sp.csr_matrix((np.ones(t), (rows, np.arange(t))), shape=(n, t))
    return sel @ values


# ---------------------------------------------------------------------------
# finite-difference gradient verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FDReport:
    passed: bool
    max_rel_error: float
    checked: int
    worst_coord: tuple
    rtol: float

    def __str__(self):
        tag = "pass" if self.passed else "FAIL"
        return (f"fd-check {tag}: max rel err {self.max_rel_error:.3e} over "
                f"{self.checked} coords (rtol {self.rtol:.1e}, worst {self.worst_coord})")


def finite_difference_check(loss_fn, param, analytic_grad, h=1e-5, rtol=1e-4,
                            max_coords=200, seed=0) -> FDReport:
    """Central-difference check of an analytic gradient.

    Checks every coordinate, or a seeded random subsample of ``max_coords``
    when the parameter is larger. Failures are reported, not raised.
    """
    from sail import rng

    param = np.asarray(param, dtype=np.float64)
    flat = param.ravel()
    grad = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if grad.shape != flat.shape:
        raise ValueError("analytic gradient shape mismatch")
    if flat.size <= max_coords:
        coords = np.arange(flat.size)
    else:
        coords = rng.stream(seed, "fd-check").choice(flat.size, size=max_coords,
                                                     replace=False)
    work = param.copy()
    wflat = work.ravel()
    max_err = 0.0
    worst = (0,)
    for c in coords:
        orig = wflat[c]
        wflat[c] = orig + h
        up = loss_fn(work)
        wflat[c] = orig - h
        down = loss_fn(work)
        wflat[c] = orig
        fd = (up - down) / (2.0 * h)
        denom = max(abs(fd), abs(grad[c]), 1e-6)
        err = abs(fd - grad[c]) / denom
        if err > max_err:
            max_err = err
            worst = tuple(np.unravel_index(c, param.shape))
    return FDReport(passed=max_err <= rtol, max_rel_error=max_err,
                    checked=len(coords), worst_coord=worst, rtol=rtol)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators plus step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, shape, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=np.zeros(shape, dtype=np.float64),
                   v=np.zeros(shape, dtype=np.float64),
                   t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def reset(self) -> None:
        """Zero the moment estimates; used after parameter perturbations."""
        self.m = np.zeros_like(self.m)
        self.v = np.zeros_like(self.v)
        self.t = 0


def adam_step(param, grad, state: AdamState):
    """One bias-corrected Adam update. Returns (new_param, state)."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape or grad.shape != state.m.shape:
        raise ValueError("gradient/parameter shape mismatch")
    _require_finite(grad, "gradient")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), state


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_uniform(fan_in, fan_out, gen) -> np.ndarray:
    """Uniform init in [-sqrt(6/(fan_in+fan_out)), +...], 64-bit."""
    lim = glorot_limit(fan_in, fan_out)
    return gen.uniform(-lim, lim, size=(fan_in, fan_out)).astype(np.float64)
