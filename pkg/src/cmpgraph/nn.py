"""Small deterministic neural toolkit.

Dense layers, activations, inverted dropout, Adam and a central
finite-difference gradient checker. Models built on top of this module
derive their gradients by hand; parameters are plain ``dict[str, ndarray]``
so the optimizer and the checker can walk them generically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity", "tanh")

Params = dict[str, np.ndarray]
LossFn = Callable[[Params], "tuple[float, Params]"]


def make_rng(seed) -> np.random.Generator:
    """Seeded generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(z: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of the activation w.r.t. its input, given input and output."""
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class DenseLayer:
    """Affine map followed by an elementwise activation.

    ``weights`` has shape ``(out_dim, in_dim)``; inputs may be a single
    vector or a batch of row vectors.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator,
             activation: str = "identity", bias: bool = True) -> "DenseLayer":
        w, b = init_weights(in_dim, out_dim, rng, bias=bias)
        return cls(w, b, activation)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return dense_forward(self, x)


def init_weights(in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Uniform fan-in initialisation in [-1/sqrt(in_dim), 1/sqrt(in_dim)]."""
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = rng.uniform(-bound, bound, size=out_dim) if bias else np.zeros(out_dim)
    return w, b


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} features, layer expects {layer.in_dim}")
    return activate(x @ layer.weights.T + layer.bias, layer.activation)


def dropout_mask(shape, rate: float, rng: np.random.Generator | None) -> np.ndarray | None:
    """Inverted-dropout multiplier (0 or 1/(1-rate)), or None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0 or rng is None:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None = None,
            training: bool = True) -> np.ndarray:
    """Inverted dropout; identity at inference time or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    return x * dropout_mask(x.shape, rate, rng)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff))


@dataclass
class AdamState:
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)


def adam_update(state: AdamState, params: Params, grads: Params) -> Params:
    """One bias-corrected Adam step. Returns a new parameter dict and
    advances ``state`` in place."""
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape for {name!r}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    new = dict(params)
    for name, g in grads.items():
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(params[name])
            v = np.zeros_like(params[name])
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new[name] = params[name] - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return self.worst < self.tolerance


def grad_check(loss_fn: LossFn, params: Params, tolerance: float = 1e-4,
               h: float = 1e-5, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``loss_fn(params)`` must return ``(loss, grads)``. The relative error of
    each entry is ``|a - n| / max(|a|, |n|, floor)``; the report keeps the
    maximum per parameter block.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = loss_fn(params)
    errors = {}
    for name, value in params.items():
        worst = 0.0
        flat = value.reshape(-1)
        a_flat = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up, _ = loss_fn(params)
            flat[k] = orig - h
            down, _ = loss_fn(params)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[k]), abs(numeric), floor)
            worst = max(worst, abs(a_flat[k] - numeric) / denom)
        errors[name] = worst
    return GradCheckReport(errors, tolerance)


@dataclass
class FitResult:
    params: Params
    losses: list[float]
    best_epoch: int

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def best_loss(self) -> float:
        return self.losses[self.best_epoch]


def fit(loss_fn: Callable[[Params, int], "tuple[float, Params]"], params: Params,
        epochs: int, patience: int, learning_rate: float = 1e-2) -> FitResult:
    """Full-batch Adam with early stopping on the training loss.

    ``loss_fn(params, epoch)`` is evaluated once per epoch before the update;
    the parameters with the lowest observed loss are returned.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    state = AdamState(learning_rate=learning_rate)
    best = (np.inf, 0, params)
    losses = []
    wait = 0
    for epoch in range(epochs):
        loss, grads = loss_fn(params, epoch)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        losses.append(float(loss))
        if loss < best[0]:
            best = (loss, epoch, params)
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                break
        params = adam_update(state, params, grads)
    return FitResult(best[2], losses, best[1])
