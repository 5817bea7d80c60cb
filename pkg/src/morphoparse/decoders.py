"""The three task heads over the shared representation.

* CWI: a 256-unit MLP with dropout classifying each token content/function,
  trained with class-weighted cross entropy.
* Parser: deep-biaffine arc and relation scorers over content-word rows, with
  a learned root vector prepended as head candidate 0.
* Features: one sigmoid logit per atomic `Class=Value` pair, thresholded at
  0.5 (inclusive); function words bypass this head entirely.
"""

from __future__ import annotations

import numpy as np

from .errors import MorphoparseError
from .nn import (
    DenseLayer,
    LayerNorm,
    Param,
    dropout,
    dropout_backward,
    relu_backward,
    relu_forward,
    sigmoid,
    sigmoid_bce,
    weighted_softmax_ce,
)

CWI_FUNCTION = 0
CWI_CONTENT = 1


def cwi_class_weights(n_content: int, n_function: int) -> np.ndarray:
    """Inverse-frequency class weights, normalized to mean 1.

    Order is [function, content].  A class that never occurs degrades to
    uniform weighting for that slot.
    """
    counts = np.array([max(n_function, 1), max(n_content, 1)], dtype=np.float64)
    w = counts.sum() / (2.0 * counts)
    return w / w.mean()


class MlpBlock:
    """dense -> layer norm -> ReLU, as used by the parser projections."""

    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.dense = DenseLayer.init(name, n_in, n_out, rng)
        self.norm = LayerNorm(f"{name}.ln", n_out)

    def params(self) -> list[Param]:
        return self.dense.params() + self.norm.params()

    def forward(self, x: np.ndarray):
        z = self.dense.forward(x)
        y, ln_cache = self.norm.forward(z)
        return relu_forward(y), (x, y, ln_cache)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x, y, ln_cache = cache
        d_y = relu_backward(y, d_out)
        d_z = self.norm.backward(ln_cache, d_y)
        return self.dense.backward(x, d_z)


class CwiHead:
    def __init__(self, shared_dim: int, hidden: int, dropout_rate: float,
                 rng: np.random.Generator):
        self.hidden = DenseLayer.init("cwi.hidden", shared_dim, hidden, rng)
        self.out = DenseLayer.init("cwi.out", hidden, 2, rng)
        self.dropout_rate = dropout_rate

    def params(self) -> list[Param]:
        return self.hidden.params() + self.out.params()

    def forward(self, h_shared: np.ndarray, rng: np.random.Generator | None, training: bool):
        z = self.hidden.forward(h_shared)
        a = relu_forward(z)
        a_drop, mask = dropout(a, self.dropout_rate, rng, training)
        logits = self.out.forward(a_drop)
        return logits, (h_shared, z, a_drop, mask)

    def backward(self, cache, d_logits: np.ndarray) -> np.ndarray:
        h_shared, z, a_drop, mask = cache
        d_a = dropout_backward(mask, self.out.backward(a_drop, d_logits))
        d_z = relu_backward(z, d_a)
        return self.hidden.backward(h_shared, d_z)

    @staticmethod
    def probabilities(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    @staticmethod
    def loss(logits: np.ndarray, gold_labels: np.ndarray, class_weights: np.ndarray):
        return weighted_softmax_ce(logits, gold_labels, class_weights)


class BiaffineHead:
    """Arc scores S[h][d] = dep(d)' U head(h) + u' head(h); per-relation
    biaffine + linear + bias scores for labels."""

    def __init__(self, shared_dim: int, arc_dim: int, rel_dim: int, n_rels: int,
                 rng: np.random.Generator):
        if n_rels < 1:
            raise MorphoparseError("relation inventory is empty")
        self.arc_dep = MlpBlock("arc.dep", shared_dim, arc_dim, rng)
        self.arc_head = MlpBlock("arc.head", shared_dim, arc_dim, rng)
        self.rel_dep = MlpBlock("rel.dep", shared_dim, rel_dim, rng)
        self.rel_head = MlpBlock("rel.head", shared_dim, rel_dim, rng)
        s_arc = 1.0 / np.sqrt(arc_dim)
        s_rel = 1.0 / np.sqrt(rel_dim)
        self.u_arc = Param("arc.U", rng.uniform(-s_arc, s_arc, size=(arc_dim, arc_dim)))
        self.u_arc_bias = Param("arc.u", rng.uniform(-s_arc, s_arc, size=arc_dim))
        self.u_rel = Param("rel.U", rng.uniform(-s_rel, s_rel, size=(n_rels, rel_dim, rel_dim)))
        self.u_rel_dep = Param("rel.u_dep", rng.uniform(-s_rel, s_rel, size=(n_rels, rel_dim)))
        self.u_rel_head = Param("rel.u_head", rng.uniform(-s_rel, s_rel, size=(n_rels, rel_dim)))
        self.b_rel = Param("rel.b", np.zeros(n_rels))
        self.root_vec = Param("root_vec", rng.uniform(-0.1, 0.1, size=shared_dim))

    def params(self) -> list[Param]:
        return (
            self.arc_dep.params()
            + self.arc_head.params()
            + self.rel_dep.params()
            + self.rel_head.params()
            + [
                self.u_arc,
                self.u_arc_bias,
                self.u_rel,
                self.u_rel_dep,
                self.u_rel_head,
                self.b_rel,
                self.root_vec,
            ]
        )

    def _with_root(self, h_content: np.ndarray) -> np.ndarray:
        return np.vstack([self.root_vec.value[None, :], h_content])

    def arc_scores(self, h_content: np.ndarray):
        """(m+1) x m arc score matrix over content rows (head 0 = root)."""
        a_dep, dep_cache = self.arc_dep.forward(h_content)
        a_head, head_cache = self.arc_head.forward(self._with_root(h_content))
        mixed = a_dep @ self.u_arc.value
        scores = a_head @ mixed.T + (a_head @ self.u_arc_bias.value)[:, None]
        return scores, (a_dep, dep_cache, a_head, head_cache, mixed)

    def arc_backward(self, cache, d_scores: np.ndarray) -> np.ndarray:
        a_dep, dep_cache, a_head, head_cache, mixed = cache
        d_head = d_scores @ mixed + np.outer(d_scores.sum(axis=1), self.u_arc_bias.value)
        d_mixed = d_scores.T @ a_head
        self.u_arc.grad += a_dep.T @ d_mixed
        self.u_arc_bias.grad += a_head.T @ d_scores.sum(axis=1)
        d_dep = d_mixed @ self.u_arc.value.T
        d_h = self.arc_dep.backward(dep_cache, d_dep)
        d_with_root = self.arc_head.backward(head_cache, d_head)
        self.root_vec.grad += d_with_root[0]
        return d_h + d_with_root[1:]

    def rel_scores(self, h_content: np.ndarray, heads: list[int] | np.ndarray):
        """Per-dependent logits over the relation inventory, conditioning on
        the given head assignment (indices into 0..m, 0 = root)."""
        m = h_content.shape[0]
        heads = np.asarray(heads)
        if heads.shape != (m,) or heads.min() < 0 or heads.max() > m:
            raise MorphoparseError(f"invalid head vector for {m} content words: {heads}")
        r_dep, dep_cache = self.rel_dep.forward(h_content)
        r_head_all, head_cache = self.rel_head.forward(self._with_root(h_content))
        r_head = r_head_all[heads]
        logits = (
            np.einsum("di,rij,dj->dr", r_dep, self.u_rel.value, r_head)
            + r_dep @ self.u_rel_dep.value.T
            + r_head @ self.u_rel_head.value.T
            + self.b_rel.value
        )
        return logits, (r_dep, dep_cache, r_head_all, head_cache, r_head, heads)

    def rel_backward(self, cache, d_logits: np.ndarray) -> np.ndarray:
        r_dep, dep_cache, r_head_all, head_cache, r_head, heads = cache
        self.u_rel.grad += np.einsum("dr,di,dj->rij", d_logits, r_dep, r_head)
        self.u_rel_dep.grad += d_logits.T @ r_dep
        self.u_rel_head.grad += d_logits.T @ r_head
        self.b_rel.grad += d_logits.sum(axis=0)
        d_dep = (
            np.einsum("dr,rij,dj->di", d_logits, self.u_rel.value, r_head)
            + d_logits @ self.u_rel_dep.value
        )
        d_head_sel = (
            np.einsum("dr,rij,di->dj", d_logits, self.u_rel.value, r_dep)
            + d_logits @ self.u_rel_head.value
        )
        d_head_all = np.zeros_like(r_head_all)
        np.add.at(d_head_all, heads, d_head_sel)
        d_h = self.rel_dep.backward(dep_cache, d_dep)
        d_with_root = self.rel_head.backward(head_cache, d_head_all)
        self.root_vec.grad += d_with_root[0]
        return d_h + d_with_root[1:]


class FeatsHead:
    def __init__(self, shared_dim: int, n_features: int, threshold: float,
                 rng: np.random.Generator):
        self.out = DenseLayer.init("feats.out", shared_dim, n_features, rng)
        self.threshold = threshold

    def params(self) -> list[Param]:
        return self.out.params()

    def forward(self, h_content: np.ndarray):
        logits = self.out.forward(h_content)
        return logits, h_content

    def backward(self, cache, d_logits: np.ndarray) -> np.ndarray:
        return self.out.backward(cache, d_logits)

    def probabilities(self, logits: np.ndarray) -> np.ndarray:
        return sigmoid(logits)

    def predict(self, logits: np.ndarray) -> list[list[int]]:
        """Indices of predicted features per token (probability >= threshold;
        the boundary is inclusive, so zero logits predict everything)."""
        probs = self.probabilities(logits)
        return [list(np.flatnonzero(row >= self.threshold)) for row in probs]

    @staticmethod
    def loss(logits: np.ndarray, targets: np.ndarray):
        """Sum over the vocabulary, mean over tokens."""
        n = max(logits.shape[0], 1)
        loss, grad = sigmoid_bce(logits, targets, reduction="sum")
        return loss / n, grad / n
