"""Joint model assembly, per-sentence loss computation, and checkpoint IO.

One shared representation feeds three heads.  Training losses always read
gold content rows; inference (see `pipeline`) feeds the parser and feature
heads whatever the CWI head predicts.  Checkpoints are a small versioned
binary container (JSON meta + raw float64 blobs) written deterministically,
so identical runs produce bit-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import treecrf
from .conllu import FeatureVocabulary, Sentence
from .decoders import BiaffineHead, CwiHead, FeatsHead, cwi_class_weights
from .encoder import (
    EncoderConfig,
    SharedLayer,
    contextualize,
    contextualize_backward,
    make_provider,
)
from .errors import CheckpointError, MorphoparseError
from .nn import Param, weighted_softmax_ce, word_dropout

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MORPHOPARSE-CKPT-v1\n"

# unknown gold labels are unpredictable with a frozen vocabulary; warn about
# each distinct one only once
_warned_unknown: set = set()


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    shared_hidden: int = 512
    shared_dropout: float = 0.1
    cwi_hidden: int = 256
    cwi_dropout: float = 0.5
    arc_mlp: int = 256
    rel_mlp: int = 128
    feats_threshold: float = 0.5

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        return ModelConfig(**d)


@dataclass
class SentenceExample:
    """A sentence preprocessed against a frozen vocabulary."""

    forms: list[str]
    cwi_labels: np.ndarray
    content_idx: np.ndarray
    #: gold head vector in content-word space (0 = root), or None
    gold_heads: list[int] | None
    gold_projective: bool
    #: deprel index per content token, -1 when missing/unknown
    rel_gold: np.ndarray | None
    #: (m, |features|) multi-hot targets
    feats_targets: np.ndarray | None
    sent_index: int = 0


class JointModel:
    def __init__(
        self,
        config: ModelConfig,
        vocab: FeatureVocabulary,
        seed: int = 0,
        cwi_weights: np.ndarray | None = None,
    ):
        self.config = config
        self.vocab = vocab
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.provider = make_provider(config.encoder, rng)
        ctx_dim = self.provider.dim * (2 * config.encoder.window + 1)
        self.shared = SharedLayer("shared", ctx_dim, config.shared_hidden,
                                  config.shared_dropout, rng)
        self.cwi = CwiHead(config.shared_hidden, config.cwi_hidden, config.cwi_dropout, rng)
        self.biaffine = BiaffineHead(
            config.shared_hidden, config.arc_mlp, config.rel_mlp, vocab.n_deprels, rng
        )
        self.feats = FeatsHead(config.shared_hidden, vocab.n_features,
                               config.feats_threshold, rng)
        self.cwi_weights = (
            np.ones(2) if cwi_weights is None else np.asarray(cwi_weights, dtype=np.float64)
        )

    def params(self) -> list[Param]:
        return (
            self.provider.params()
            + self.shared.params()
            + self.cwi.params()
            + self.biaffine.params()
            + self.feats.params()
        )

    # -- shared representation ------------------------------------------------

    def encode_shared(
        self,
        forms: list[str],
        sent_index: int = 0,
        rng: np.random.Generator | None = None,
        training: bool = False,
        word_dropout_rate: float = 0.0,
    ):
        h_tok, enc_cache = self.provider.encode(forms, sent_index)
        h_wd, wd_mask = word_dropout(h_tok, word_dropout_rate, rng, training)
        x_ctx = contextualize(h_wd, self.config.encoder.window)
        h_shared, shared_cache = self.shared.forward(x_ctx, rng, training)
        cache = (enc_cache, wd_mask, x_ctx, shared_cache, h_tok.shape)
        return h_shared, cache

    def encode_backward(self, cache, d_shared: np.ndarray) -> None:
        enc_cache, wd_mask, x_ctx, shared_cache, (n, dim) = cache
        d_ctx = self.shared.backward(shared_cache, d_shared)
        d_wd = contextualize_backward(d_ctx, n, dim, self.config.encoder.window)
        if wd_mask is not None:
            d_wd = d_wd * wd_mask
        self.provider.backward(enc_cache, d_wd)

    # -- joint training loss ---------------------------------------------------

    def sentence_losses(
        self,
        example: SentenceExample,
        weights: tuple[float, float, float],
        rng: np.random.Generator | None = None,
        use_dropout: bool = False,
        word_dropout_rate: float = 0.0,
        grad_scale: float | None = None,
    ) -> dict:
        """Forward (and optionally backward) pass of the weighted joint loss
        on gold content rows.  `weights` is (parser, morph, cwi).

        When `grad_scale` is given, gradients of grad_scale * L_total are
        accumulated into the parameters.
        """
        w_parser, w_morph, w_cwi = weights
        h_shared, enc_cache = self.encode_shared(
            example.forms,
            example.sent_index,
            rng,
            training=use_dropout,
            word_dropout_rate=word_dropout_rate,
        )

        cwi_logits, cwi_cache = self.cwi.forward(h_shared, rng, training=use_dropout)
        l_cwi, d_cwi_logits = CwiHead.loss(cwi_logits, example.cwi_labels, self.cwi_weights)

        d_shared = np.zeros_like(h_shared)
        l_arc = l_rel = l_morph = 0.0
        has_parser = False

        m = len(example.content_idx)
        if m > 0:
            h_content = h_shared[example.content_idx]
            d_content = np.zeros_like(h_content)

            if example.gold_heads is not None and example.gold_projective:
                has_parser = True
                arc, arc_cache = self.biaffine.arc_scores(h_content)
                l_arc, d_arc = treecrf.crf_nll_and_grad(arc, example.gold_heads)

                rel_logits, rel_cache = self.biaffine.rel_scores(
                    h_content, example.gold_heads
                )
                valid = example.rel_gold >= 0
                if valid.any():
                    l_rel, d_rel_valid = weighted_softmax_ce(
                        rel_logits[valid],
                        example.rel_gold[valid],
                        np.ones(self.vocab.n_deprels),
                    )
                    d_rel = np.zeros_like(rel_logits)
                    d_rel[valid] = d_rel_valid
                else:
                    d_rel = np.zeros_like(rel_logits)

                if grad_scale is not None:
                    scale = grad_scale * w_parser
                    d_content += self.biaffine.arc_backward(arc_cache, d_arc * scale)
                    d_content += self.biaffine.rel_backward(rel_cache, d_rel * scale)

            if example.feats_targets is not None:
                feats_logits, feats_cache = self.feats.forward(h_content)
                l_morph, d_feats = FeatsHead.loss(feats_logits, example.feats_targets)
                if grad_scale is not None:
                    d_content += self.feats.backward(feats_cache, d_feats * grad_scale * w_morph)

            if grad_scale is not None:
                d_shared[example.content_idx] += d_content

        l_parser = l_arc + l_rel
        total = w_parser * l_parser + w_morph * l_morph + w_cwi * l_cwi
        if not np.isfinite(total):
            raise MorphoparseError(
                f"non-finite loss (parser={l_parser}, morph={l_morph}, cwi={l_cwi})"
            )

        if grad_scale is not None:
            d_shared += self.cwi.backward(cwi_cache, d_cwi_logits * grad_scale * w_cwi)
            self.encode_backward(enc_cache, d_shared)

        return {
            "total": total,
            "parser": l_parser,
            "morph": l_morph,
            "cwi": l_cwi,
            "has_parser": has_parser,
        }


# -- example preparation -------------------------------------------------------


def prepare_example(
    sentence: Sentence, vocab: FeatureVocabulary, sent_index: int = 0
) -> SentenceExample:
    """Map a gold sentence onto content-word space and vocabulary indices."""
    tokens = sentence.tokens
    cwi_labels = np.array([1 if t.is_content else 0 for t in tokens], dtype=np.int64)
    content_idx = np.flatnonzero(cwi_labels)
    content = [tokens[i] for i in content_idx]
    m = len(content)

    gold_heads = None
    gold_projective = False
    rel_gold = None
    feats_targets = None
    if m > 0:
        id_to_pos = {tok.id: pos + 1 for pos, tok in enumerate(content)}
        heads: list[int] | None = []
        for tok in content:
            if tok.head is None:
                heads = None
                break
            if tok.head == 0:
                heads.append(0)
            elif tok.head in id_to_pos:
                heads.append(id_to_pos[tok.head])
            else:  # head points at a function word; tree unusable for the parser
                heads = None
                break
        if heads is not None:
            gold_heads = heads
            gold_projective = treecrf.is_projective_single_root(heads)

        rel_gold = np.zeros(m, dtype=np.int64)
        for row, tok in enumerate(content):
            idx = None if tok.deprel is None else vocab.deprel_index(tok.deprel)
            rel_gold[row] = -1 if idx is None else idx
            if tok.deprel is not None and idx is None:
                _warn_unknown(("deprel", tok.deprel))
        feats_targets = np.zeros((m, vocab.n_features))
        for row, tok in enumerate(content):
            for atom in tok.feats:
                idx = vocab.feature_index(atom)
                if idx is not None:
                    feats_targets[row, idx] = 1.0
                else:
                    _warn_unknown(("feature", str(atom)))

    return SentenceExample(
        forms=sentence.forms(),
        cwi_labels=cwi_labels,
        content_idx=content_idx,
        gold_heads=gold_heads,
        gold_projective=gold_projective,
        rel_gold=rel_gold,
        feats_targets=feats_targets,
        sent_index=sent_index,
    )


def _warn_unknown(key: tuple[str, str]) -> None:
    if key not in _warned_unknown:
        _warned_unknown.add(key)
        log.warning("gold %s %r is not in the frozen vocabulary; unpredictable", *key)


def corpus_cwi_weights(sentences: list[Sentence]) -> np.ndarray:
    n_content = sum(len(s.content_tokens()) for s in sentences)
    n_total = sum(len(s) for s in sentences)
    return cwi_class_weights(n_content, n_total - n_content)


# -- checkpoint IO ---------------------------------------------------------------


def save_checkpoint(path: str, model: JointModel, extra: dict | None = None) -> None:
    params = model.params()
    arrays = []
    offset = 0
    for p in params:
        nbytes = p.value.size * 8
        arrays.append(
            {"name": p.name, "shape": list(p.value.shape), "offset": offset, "nbytes": nbytes}
        )
        offset += nbytes
    meta = {
        "format": 1,
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "cwi_weights": model.cwi_weights.tolist(),
        "seed": model.seed,
        "arrays": arrays,
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(f"{len(meta_bytes):012d}\n".encode("ascii"))
        f.write(meta_bytes)
        for p in params:
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path: str, external_path: str | None = None) -> JointModel:
    """Rebuild a model from disk.  `external_path` points the external-file
    encoder provider at a new embedding file (it is not stored in the
    checkpoint's weight blob)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a morphoparse checkpoint")
        meta_len = int(f.read(13).decode("ascii").strip())
        meta = json.loads(f.read(meta_len).decode("utf-8"))
        blob = f.read()
    if external_path is not None:
        meta["config"]["encoder"]["external_path"] = external_path
    config = ModelConfig.from_dict(meta["config"])
    vocab = FeatureVocabulary.from_dict(meta["vocab"])
    model = JointModel(config, vocab, seed=meta["seed"],
                       cwi_weights=np.array(meta["cwi_weights"]))
    by_name = {p.name: p for p in model.params()}
    if set(by_name) != {a["name"] for a in meta["arrays"]}:
        raise CheckpointError(f"{path}: parameter inventory mismatch")
    for entry in meta["arrays"]:
        p = by_name[entry["name"]]
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"])
        if arr.shape != p.value.shape:
            raise CheckpointError(f"{path}: shape mismatch for {entry['name']}")
        p.value[...] = arr
    return model
