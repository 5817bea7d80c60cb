"""Per-token input vectors and the shared intermediate layer.

The default provider hashes surface features (lowercased form, short
prefixes/suffixes, shape flags) into a trainable bucket-embedding table and
averages the hit buckets, which keeps encoding deterministic and trainable
from scratch.  Precomputed per-token vectors can be loaded from a text file
instead when higher-fidelity contextual embeddings are available.  Context is
added by concatenating a +-window band of neighbor rows.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError, FormatError, MorphoparseError
from .nn import DenseLayer, Param, dropout, dropout_backward, relu_backward, relu_forward

PROVIDER_HASHED = "hashed_features"
PROVIDER_EXTERNAL = "external_file"


@dataclass
class EncoderConfig:
    dim: int = 128
    hash_buckets: int = 2**18
    window: int = 2
    provider: str = PROVIDER_HASHED
    external_path: str | None = None

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ConfigError("encoder dim must be positive")
        if self.hash_buckets <= 0:
            raise ConfigError("hash_buckets must be positive")
        if not 0 <= self.window <= 5:
            raise ConfigError("window must be in 0..5")
        if self.provider not in (PROVIDER_HASHED, PROVIDER_EXTERNAL):
            raise ConfigError(f"unknown encoder provider {self.provider!r}")

    @property
    def context_dim(self) -> int:
        return self.dim * (2 * self.window + 1)


def _bucket(feature: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


def token_features(form: str) -> list[str]:
    """Namespaced surface features for one token."""
    if not form:
        raise MorphoparseError("cannot encode an empty token form")
    low = form.lower()
    feats = [f"form={low}"]
    for k in (1, 2, 3):
        if k <= len(low):
            feats.append(f"pre{k}={low[:k]}")
            feats.append(f"suf{k}={low[-k:]}")
    if form[0].isupper():
        feats.append("shape=cap")
    if form.isdigit():
        feats.append("shape=num")
    if all(not c.isalnum() for c in form):
        feats.append("shape=punct")
    return feats


class HashedEncoder:
    """Trainable hashed-feature embeddings, averaged per token."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        scale = 1.0 / np.sqrt(config.dim)
        self.table = Param(
            "encoder.table", rng.uniform(-scale, scale, size=(config.hash_buckets, config.dim))
        )
        # gradients only ever hit hashed rows; let the optimizer skip the rest
        self.table.touched_rows = set()

    @property
    def dim(self) -> int:
        return self.config.dim

    def params(self) -> list[Param]:
        return [self.table]

    def encode(self, forms: list[str], sent_index: int = 0):
        if not forms:
            raise MorphoparseError("cannot encode an empty sentence")
        buckets = [
            [_bucket(f, self.config.hash_buckets) for f in token_features(form)]
            for form in forms
        ]
        h = np.stack([self.table.value[idx].mean(axis=0) for idx in buckets])
        return h, buckets

    def backward(self, cache, d_h: np.ndarray) -> None:
        for row, idx in zip(d_h, cache):
            np.add.at(self.table.grad, idx, row[None, :] / len(idx))
            if self.table.touched_rows is not None:
                self.table.touched_rows.update(idx)


class ExternalEmbeddings:
    """Fixed per-token vectors read from a text file.

    Format: one blank-line-separated block per sentence, one line per token:
    the form, a tab, then space-separated floats.  Sentences are matched to
    the input corpus by order.
    """

    def __init__(self, path: str):
        blocks: list[list[tuple[str, list[float]]]] = []
        current: list[tuple[str, list[float]]] = []
        with open(path, encoding="utf-8") as f:
            for raw in f:
                line = raw.rstrip("\n")
                if not line.strip():
                    if current:
                        blocks.append(current)
                        current = []
                    continue
                if "\t" not in line:
                    raise FormatError(f"embedding line missing tab separator: {line!r}")
                form, vec = line.split("\t", 1)
                current.append((form, [float(x) for x in vec.split()]))
        if current:
            blocks.append(current)
        if not blocks:
            raise FormatError(f"no embeddings found in {path}")
        dims = {len(vec) for block in blocks for _, vec in block}
        if len(dims) != 1:
            raise FormatError(f"inconsistent embedding dims in {path}: {sorted(dims)}")
        self._dim = dims.pop()
        if self._dim == 0:
            raise FormatError(f"zero-dimensional embeddings in {path}")
        self.sentences = [
            (tuple(form for form, _ in block), np.array([vec for _, vec in block]))
            for block in blocks
        ]

    @property
    def dim(self) -> int:
        return self._dim

    def params(self) -> list[Param]:
        return []

    def encode(self, forms: list[str], sent_index: int = 0):
        if sent_index >= len(self.sentences):
            raise AlignmentError(
                f"corpus has more sentences than the embedding file ({len(self.sentences)})"
            )
        stored_forms, matrix = self.sentences[sent_index]
        if len(stored_forms) != len(forms):
            raise AlignmentError(
                f"sentence {sent_index}: {len(forms)} tokens vs "
                f"{len(stored_forms)} embedding rows"
            )
        return matrix, None

    def backward(self, cache, d_h: np.ndarray) -> None:
        pass  # fixed vectors


def contextualize(h: np.ndarray, window: int) -> np.ndarray:
    """Concatenate each row with its +-window neighbors, zero-padded."""
    if window == 0:
        return h
    n, dim = h.shape
    out = np.zeros((n, dim * (2 * window + 1)))
    for offset in range(-window, window + 1):
        col = (offset + window) * dim
        src_lo, src_hi = max(0, offset), min(n, n + offset)
        out[src_lo - offset : src_hi - offset, col : col + dim] = h[src_lo:src_hi]
    return out


def contextualize_backward(d_out: np.ndarray, n: int, dim: int, window: int) -> np.ndarray:
    if window == 0:
        return d_out
    d_h = np.zeros((n, dim))
    for offset in range(-window, window + 1):
        col = (offset + window) * dim
        src_lo, src_hi = max(0, offset), min(n, n + offset)
        d_h[src_lo:src_hi] += d_out[src_lo - offset : src_hi - offset, col : col + dim]
    return d_h


class SharedLayer:
    """The intermediate layer all three decoders read: dense + ReLU + dropout."""

    def __init__(self, name: str, n_in: int, n_out: int, dropout_rate: float,
                 rng: np.random.Generator):
        self.dense = DenseLayer.init(name, n_in, n_out, rng)
        self.dropout_rate = dropout_rate

    def params(self) -> list[Param]:
        return self.dense.params()

    def forward(self, x: np.ndarray, rng: np.random.Generator | None, training: bool):
        z = self.dense.forward(x)
        a = relu_forward(z)
        out, mask = dropout(a, self.dropout_rate, rng, training)
        return out, (x, z, mask)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x, z, mask = cache
        d_a = dropout_backward(mask, d_out)
        d_z = relu_backward(z, d_a)
        return self.dense.backward(x, d_z)


def make_provider(config: EncoderConfig, rng: np.random.Generator):
    if config.provider == PROVIDER_HASHED:
        return HashedEncoder(config, rng)
    if config.external_path is None:
        raise ConfigError("external_file provider needs external_path")
    return ExternalEmbeddings(config.external_path)
