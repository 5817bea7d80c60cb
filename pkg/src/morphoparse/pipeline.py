"""End-to-end inference: CWI, confidence post-processing, tree decoding,
relation labeling and feature prediction, emitting annotated sentences.

Post-processing follows two rules.  First, an interior token whose label
confidence is below 0.6 and whose immediate neighbors both carry the opposite
label is flipped to match its context (one left-to-right pass over the
sentence).  Second, if every token comes out labeled function, the first
token is forced to be content with head 0, deprel `root`, and a placeholder
FEATS value, so every sentence stays parseable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import treecrf
from .conllu import EMPTY_CONTENT_FEATS, Sentence, Token, recompose_feats
from .decoders import CWI_CONTENT, CWI_FUNCTION, CwiHead
from .errors import ConfigError
from .model import JointModel

CONFIDENCE_THRESHOLD = 0.6


@dataclass
class PipelineConfig:
    confidence_threshold: float = CONFIDENCE_THRESHOLD
    #: FEATS literal for content tokens with an empty predicted feature set;
    #: `|` is what the fallback rule prescribes, `_` is plain CoNLL-U (but
    #: makes the token unreadable as content on re-parse)
    empty_feats_literal: str = EMPTY_CONTENT_FEATS

    def __post_init__(self) -> None:
        if self.empty_feats_literal not in ("|", "_"):
            raise ConfigError("empty_feats_literal must be '|' or '_'")


@dataclass
class SentencePrediction:
    """Provenance of post-processing decisions for one sentence."""

    relabeled: list[int] = field(default_factory=list)
    forced_fallback: bool = False


@dataclass
class PredictStats:
    sentences: list[SentencePrediction] = field(default_factory=list)

    @property
    def n_relabeled(self) -> int:
        return sum(len(s.relabeled) for s in self.sentences)

    @property
    def n_fallback(self) -> int:
        return sum(1 for s in self.sentences if s.forced_fallback)


def relabel_low_confidence(
    labels: list[int], confidences: list[float], threshold: float = CONFIDENCE_THRESHOLD
) -> tuple[list[int], list[int]]:
    """Flip interior low-confidence labels sandwiched between two tokens of
    the opposite type.  Single left-to-right pass; earlier flips feed later
    decisions; sentence-edge tokens are never touched."""
    out = list(labels)
    flipped = []
    for i in range(1, len(out) - 1):
        if confidences[i] < threshold and out[i - 1] == out[i + 1] != out[i]:
            out[i] = out[i - 1]
            flipped.append(i)
    return out, flipped


def all_function_fallback(labels: list[int]) -> tuple[list[int], bool]:
    """Force the first token to content when no token was labeled content."""
    if not labels or any(lab == CWI_CONTENT for lab in labels):
        return list(labels), False
    out = list(labels)
    out[0] = CWI_CONTENT
    return out, True


def predict(
    model: JointModel,
    sentences: list[Sentence],
    config: PipelineConfig | None = None,
    sent_offset: int = 0,
    threads: int = 1,
) -> tuple[list[Sentence], PredictStats]:
    """Annotate sentences (only their forms are read) with content flags,
    heads, deprels and features.  Model parameters are only read, so
    sentences can be mapped over worker threads; output order is preserved
    either way."""
    config = config if config is not None else PipelineConfig()
    args = [(model, sentence, config, sent_offset + i) for i, sentence in enumerate(sentences)]
    if threads > 1 and len(sentences) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _predict_sentence(*a), args))
    else:
        results = [_predict_sentence(*a) for a in args]
    stats = PredictStats(sentences=[info for _, info in results])
    return [annotated for annotated, _ in results], stats


def _predict_sentence(
    model: JointModel,
    sentence: Sentence,
    config: PipelineConfig,
    sent_index: int,
) -> tuple[Sentence, SentencePrediction]:
    info = SentencePrediction()
    n = len(sentence.tokens)
    if n == 0:
        return replace(sentence, tokens=[]), info

    h_shared, _ = model.encode_shared(sentence.forms(), sent_index)
    cwi_logits, _ = model.cwi.forward(h_shared, rng=None, training=False)
    probs = CwiHead.probabilities(cwi_logits)
    labels = list(np.argmax(probs, axis=1))
    confidences = [float(probs[i, lab]) for i, lab in enumerate(labels)]

    labels, info.relabeled = relabel_low_confidence(
        labels, confidences, config.confidence_threshold
    )
    labels, info.forced_fallback = all_function_fallback(labels)

    content_pos = [i for i, lab in enumerate(labels) if lab == CWI_CONTENT]
    heads_content: list[int] = []
    deprels: list[str] = []
    feat_sets: list[frozenset] = []

    if info.forced_fallback:
        heads_content = [0]
        deprels = ["root"]
        feat_sets = [frozenset()]
    elif content_pos:
        h_content = h_shared[content_pos]
        arc, _ = model.biaffine.arc_scores(h_content)
        heads_content = treecrf.viterbi_decode(arc)
        rel_logits, _ = model.biaffine.rel_scores(h_content, heads_content)
        deprels = [model.vocab.deprels[r] for r in np.argmax(rel_logits, axis=1)]
        feats_logits, _ = model.feats.forward(h_content)
        feat_sets = [
            frozenset(model.vocab.features[j] for j in row)
            for row in model.feats.predict(feats_logits)
        ]

    tokens: list[Token] = []
    content_rank = {pos: k for k, pos in enumerate(content_pos)}
    for i, tok in enumerate(sentence.tokens):
        if i in content_rank:
            k = content_rank[i]
            head_k = heads_content[k]
            head_id = 0 if head_k == 0 else sentence.tokens[content_pos[head_k - 1]].id
            feats = feat_sets[k]
            feats_raw = recompose_feats(feats) if feats else config.empty_feats_literal
            tokens.append(
                Token(
                    id=tok.id,
                    form=tok.form,
                    feats_raw=feats_raw,
                    feats=feats,
                    head=head_id,
                    deprel=deprels[k],
                    is_content=True,
                    char_span=tok.char_span,
                )
            )
        else:
            tokens.append(
                Token(
                    id=tok.id,
                    form=tok.form,
                    feats_raw="_",
                    feats=frozenset(),
                    head=None,
                    deprel=None,
                    is_content=False,
                    char_span=tok.char_span,
                )
            )
    annotated = Sentence(
        sent_id=sentence.sent_id,
        text=sentence.text,
        tokens=tokens,
        comments=list(sentence.comments),
        mwt_lines=list(sentence.mwt_lines),
    )
    return annotated, info
