"""Small float64 neural kernel with hand-written gradients.

Everything here is numpy-backed and deliberately tiny: dense layers, ReLU,
layer norm, (word) dropout, the two classification losses, AdamW with
decoupled weight decay, and a central-difference gradient checker used by the
test suite to audit every backward pass.  No autodiff, no GPU.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, MorphoparseError

LAYER_NORM_EPS = 1e-5


class Param:
    """A named trainable array with a gradient accumulator.

    Code that accumulates row-sparse gradients into a large 2D parameter
    (the hashed embedding table) may opt in to sparse bookkeeping by setting
    `touched_rows` to a set and recording every row index it writes; the
    optimizer then skips rows that provably carry zero gradient and zero
    momentum, which is bit-identical to the dense update.
    """

    __slots__ = ("name", "value", "grad", "touched_rows")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.touched_rows: set[int] | None = None

    def zero_grad(self) -> None:
        if self.touched_rows is None:
            self.grad[...] = 0.0
        elif self.touched_rows:
            rows = np.fromiter(self.touched_rows, dtype=np.int64)
            self.grad[rows] = 0.0
            self.touched_rows.clear()

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        return f"Param({self.name}, shape={self.value.shape})"


class DenseLayer:
    """y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, name: str, w: np.ndarray, b: np.ndarray):
        self.W = Param(f"{name}.W", w)
        self.b = Param(f"{name}.b", b)

    @staticmethod
    def init(name: str, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        # Glorot-uniform keeps activations in range for the shallow stacks here
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
        return DenseLayer(name, w, np.zeros(n_out))

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.W.value.shape[1]:
            raise DimensionError(
                f"{self.W.name}: input width {x.shape[-1]} != {self.W.value.shape[1]}"
            )
        return x @ self.W.value.T + self.b.value

    def backward(self, x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads; return d_loss/d_x."""
        self.W.grad += d_out.T @ x
        self.b.grad += d_out.sum(axis=0)
        return d_out @ self.W.value


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    return d_out * (x > 0.0)


class LayerNorm:
    """Row-wise normalization over the last axis with learned gain/bias."""

    def __init__(self, name: str, dim: int):
        self.gain = Param(f"{name}.gain", np.ones(dim))
        self.bias = Param(f"{name}.bias", np.zeros(dim))

    def params(self) -> list[Param]:
        return [self.gain, self.bias]

    def forward(self, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        x_hat = (x - mu) * inv_std
        return x_hat * self.gain.value + self.bias.value, (x_hat, inv_std)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x_hat, inv_std = cache
        self.gain.grad += (d_out * x_hat).sum(axis=0)
        self.bias.grad += d_out.sum(axis=0)
        d_hat = d_out * self.gain.value
        # standard layer-norm backward: remove the mean and x_hat projections
        return inv_std * (
            d_hat
            - d_hat.mean(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)
        )


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted unit dropout; returns (output, mask) where mask is None when
    the pass-through path was taken."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("dropout at training time needs an RNG")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def word_dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Zero whole token rows (first axis) with inverted scaling."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"word dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("word dropout at training time needs an RNG")
    mask = (rng.random((x.shape[0], 1)) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: np.ndarray | None, d_out: np.ndarray) -> np.ndarray:
    return d_out if mask is None else d_out * mask


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def weighted_softmax_ce(
    logits: np.ndarray, gold: np.ndarray, class_weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Class-weighted cross entropy, mean over rows.

    loss_i = -w[gold_i] * log softmax(logits_i)[gold_i]; returns (mean loss,
    d_logits for the mean).
    """
    logits = np.atleast_2d(logits)
    gold = np.atleast_1d(gold)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if np.any(class_weights <= 0):
        raise ConfigError("class weights must be positive")
    if gold.min() < 0 or gold.max() >= logits.shape[1]:
        raise MorphoparseError(f"gold class index out of range: {gold}")
    n = logits.shape[0]
    logp = log_softmax(logits)
    w = class_weights[gold]
    loss = float(-(w * logp[np.arange(n), gold]).mean())
    d_logits = np.exp(logp)
    d_logits[np.arange(n), gold] -= 1.0
    d_logits *= w[:, None] / n
    return loss, d_logits


def sigmoid_bce(
    logits: np.ndarray, targets: np.ndarray, reduction: str = "sum"
) -> tuple[float, np.ndarray]:
    """Numerically stable binary cross entropy over independent logits.

    Elementwise loss max(z,0) - z*t + log(1 + exp(-|z|)); gradient is
    sigmoid(z) - t.  `reduction` is "sum" or "mean" over all elements.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise DimensionError(f"logits {logits.shape} vs targets {targets.shape}")
    elem = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    grad = sigmoid(logits) - targets
    if reduction == "sum":
        return float(elem.sum()), grad
    if reduction == "mean":
        scale = 1.0 / max(elem.size, 1)
        return float(elem.mean()), grad * scale
    raise ConfigError(f"unknown reduction {reduction!r}")


class AdamW:
    """AdamW with decoupled weight decay applied before the moment update."""

    def __init__(
        self,
        params: list[Param],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}
        # rows of sparse params that have ever carried gradient (their
        # momentum tail keeps moving even on steps where the new grad is 0)
        self._active = {p.name: set() for p in self.params if p.touched_rows is not None}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        # rows needing a moment update per sparse param (ever-active set);
        # rows outside it have zero grad and zero moments, so skipping them
        # is bit-identical to the dense formula
        sparse_rows: dict[str, np.ndarray | None] = {}
        for p in self.params:
            if p.touched_rows is not None:
                active = self._active[p.name]
                active.update(p.touched_rows)
                sparse_rows[p.name] = (
                    np.fromiter(sorted(active), dtype=np.int64) if active else None
                )
                rows = sparse_rows[p.name]
                grad_view = p.grad[rows] if rows is not None else None
            else:
                grad_view = p.grad
            if grad_view is not None and not np.all(np.isfinite(grad_view)):
                raise MorphoparseError(f"non-finite gradient in {p.name}; aborting step")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p in self.params:
            if self.weight_decay != 0.0:
                p.value -= self.lr * self.weight_decay * p.value
            m = self.m[p.name]
            v = self.v[p.name]
            if p.name not in sparse_rows:
                m *= self.beta1
                m += (1.0 - self.beta1) * p.grad
                v *= self.beta2
                v += (1.0 - self.beta2) * np.square(p.grad)
                p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                continue
            rows = sparse_rows[p.name]
            if rows is None:
                continue
            g = p.grad[rows]
            m_r = self.beta1 * m[rows] + (1.0 - self.beta1) * g
            v_r = self.beta2 * v[rows] + (1.0 - self.beta2) * np.square(g)
            m[rows] = m_r
            v[rows] = v_r
            p.value[rows] -= self.lr * (m_r / bc1) / (np.sqrt(v_r / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }


def grad_check(loss_fn, params: list[Param], eps: float = 1e-5) -> float:
    """Central-difference audit of analytic gradients.

    `loss_fn()` must zero nothing itself: it runs forward+backward,
    *accumulating* into `p.grad`, and returns the scalar loss.  The checker
    zeroes grads, captures the analytic gradient once, then perturbs every
    scalar parameter and reports the worst relative error
    |a - n| / max(1, |a|, |n|).
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        a_flat = analytic[p.name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = loss_fn()
            flat[i] = orig - eps
            f_minus = loss_fn()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]), abs(numeric))
            worst = max(worst, err)
    return worst
