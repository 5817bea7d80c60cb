"""Reader/writer and data model for the content/function CoNLL-U dialect.

The file format is ordinary 10-column CoNLL-U with one twist: only content
words carry FEATS/HEAD/DEPREL, function words have `_` in all three columns,
and the dependency tree spans content words only.  A token is a content word
exactly when its FEATS column is not `_`.  Abstract nodes (empty nodes with
decimal ids such as `8.1`) are dropped at load time, with head references
into them reattached transitively.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConlluParseError, FormatError, MorphoparseError

log = logging.getLogger(__name__)

NCOLS = 10

#: FEATS literal used for a content word with an empty feature set.  The
#: all-function fallback forces a root token with this value, so it has to
#: survive a parse round-trip (it is not `_`, hence still marks content).
EMPTY_CONTENT_FEATS = "|"


@dataclass(frozen=True, order=True)
class AtomicFeature:
    """A single `Class=Value` pair, the unit of multi-label feature prediction."""

    cls: str
    value: str

    def __str__(self) -> str:
        return f"{self.cls}={self.value}"


def decompose_feats(feats_raw: str) -> frozenset[AtomicFeature]:
    """Split a FEATS column value into atomic `Class=Value` pairs.

    Multi-valued entries (`Case=Ine;Atr`, syncretic `Gender=Fem,Masc`) yield
    one atom per value.  `_` yields the empty set, as does the bare-`|`
    placeholder written by the inference fallback.
    """
    if feats_raw == "_":
        return frozenset()
    atoms = []
    for entry in feats_raw.split("|"):
        if not entry:
            # tolerated so that the `|` placeholder round-trips
            continue
        if "=" not in entry:
            raise ConlluParseError(f"FEATS entry without '=': {entry!r}")
        cls, values = entry.split("=", 1)
        if not cls:
            raise ConlluParseError(f"FEATS entry with empty class: {entry!r}")
        for value in values.replace(",", ";").split(";"):
            if not value:
                raise ConlluParseError(f"FEATS entry with empty value: {entry!r}")
            atoms.append(AtomicFeature(cls, value))
    return frozenset(atoms)


def recompose_feats(feats: frozenset[AtomicFeature] | set[AtomicFeature]) -> str:
    """Serialize a set of atoms canonically: values `;`-joined per class,
    classes `|`-joined, both in lexicographic order.  Empty set -> `_`."""
    if not feats:
        return "_"
    by_class: dict[str, list[str]] = {}
    for atom in feats:
        by_class.setdefault(atom.cls, []).append(atom.value)
    return "|".join(
        f"{cls}={';'.join(sorted(values))}" for cls, values in sorted(by_class.items())
    )


@dataclass
class Token:
    """One surface token.  `head`/`deprel` are None when absent (`_`)."""

    id: int
    form: str
    feats_raw: str
    feats: frozenset[AtomicFeature]
    head: int | None
    deprel: str | None
    is_content: bool
    char_span: tuple[int, int] = (0, 0)
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    deps: str = "_"
    misc: str = "_"

    @staticmethod
    def content(id: int, form: str, feats_raw: str, head: int, deprel: str) -> "Token":
        return Token(id, form, feats_raw, decompose_feats(feats_raw), head, deprel, True)

    @staticmethod
    def function(id: int, form: str) -> "Token":
        return Token(id, form, "_", frozenset(), None, None, False)


@dataclass
class Sentence:
    sent_id: str
    text: str | None
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)
    #: multiword-token range lines, kept verbatim as (first word id, raw line)
    mwt_lines: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    def content_tokens(self) -> list[Token]:
        return [t for t in self.tokens if t.is_content]

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def has_gold_tree(self) -> bool:
        return any(t.head is not None for t in self.tokens)


Corpus = list


def _compute_char_spans(sentence: Sentence) -> None:
    """Fill token char spans from the `# text` comment when the forms can be
    matched in order, else from whitespace-joined forms."""
    spans: list[tuple[int, int]] | None = None
    if sentence.text is not None:
        spans = []
        cursor = 0
        text = sentence.text
        for tok in sentence.tokens:
            while cursor < len(text) and text[cursor].isspace():
                cursor += 1
            if text.startswith(tok.form, cursor):
                spans.append((cursor, cursor + len(tok.form)))
                cursor += len(tok.form)
            else:
                spans = None  # e.g. multiword tokens; fall back below
                break
    if spans is None:
        spans = []
        cursor = 0
        for tok in sentence.tokens:
            spans.append((cursor, cursor + len(tok.form)))
            cursor += len(tok.form) + 1
    for tok, span in zip(sentence.tokens, spans):
        tok.char_span = span


def _resolve_abstract_heads(
    head_str: str,
    abstract_heads: dict[str, str],
    sent_id: str,
) -> int | None:
    """Follow a head reference through removed abstract nodes until it lands
    on a surviving integer id (or nothing)."""
    seen = set()
    while head_str in abstract_heads:
        if head_str in seen:
            raise FormatError(f"{sent_id}: cyclic head chain through abstract node {head_str}")
        seen.add(head_str)
        head_str = abstract_heads[head_str]
    if head_str == "_" or head_str == "":
        log.warning("%s: head chain through abstract nodes ends nowhere; head dropped", sent_id)
        return None
    return int(head_str)


@dataclass
class RawSentence:
    """A sentence block as read from disk, abstract nodes still in place."""

    sent_id: str
    text: str | None
    comments: list[str]
    #: (source line number, 10 columns) per non-comment line
    rows: list[tuple[int, list[str]]]


def filter_abstract_nodes(raw: RawSentence) -> Sentence:
    """Turn raw 10-column rows into a Sentence: drop abstract nodes, remap
    heads, derive the content flag, decompose FEATS.

    Heads pointing at a removed abstract node are reattached transitively to
    the node's own head; a chain that ends nowhere drops the head with a
    warning, and a cyclic chain is a FormatError.
    """
    sent_id, text, comments = raw.sent_id, raw.text, raw.comments
    word_rows: list[tuple[int, list[str]]] = []
    mwt_lines: list[tuple[int, str]] = []
    abstract_heads: dict[str, str] = {}

    for line_no, cols in raw.rows:
        tok_id = cols[0]
        if "-" in tok_id:
            mwt_lines.append((int(tok_id.split("-")[0]), "\t".join(cols)))
        elif "." in tok_id:
            abstract_heads[tok_id] = cols[6]
        else:
            word_rows.append((line_no, cols))

    tokens: list[Token] = []
    for expected_id, (line_no, cols) in enumerate(word_rows, start=1):
        try:
            tok_id = int(cols[0])
        except ValueError:
            raise ConlluParseError(f"unparseable token id {cols[0]!r}", line=line_no)
        if tok_id != expected_id:
            raise FormatError(
                f"{sent_id}: non-contiguous token ids after abstract-node filtering "
                f"(saw {tok_id}, expected {expected_id})"
            )
        feats_raw = cols[5]
        try:
            feats = decompose_feats(feats_raw)
        except ConlluParseError as exc:
            raise ConlluParseError(str(exc), line=line_no)

        head_str = cols[6]
        if head_str == "_":
            head = None
        elif "." in head_str:
            head = _resolve_abstract_heads(head_str, abstract_heads, sent_id)
        else:
            try:
                head = int(head_str)
            except ValueError:
                raise ConlluParseError(f"unparseable head {head_str!r}", line=line_no)

        deprel = cols[7] if cols[7] != "_" else None
        tokens.append(
            Token(
                id=tok_id,
                form=cols[1],
                feats_raw=feats_raw,
                feats=feats,
                head=head,
                deprel=deprel,
                is_content=feats_raw != "_",
                lemma=cols[2],
                upos=cols[3],
                xpos=cols[4],
                deps=cols[8],
                misc=cols[9],
            )
        )

    sentence = Sentence(sent_id, text, tokens, comments, mwt_lines)
    _compute_char_spans(sentence)
    _validate(sentence)
    return sentence


def _validate(sentence: Sentence) -> None:
    """Warn about gold annotations that break the scheme's invariants."""
    content_ids = {t.id for t in sentence.tokens if t.is_content}
    if sentence.has_gold_tree():
        roots = [t.id for t in sentence.tokens if t.head == 0]
        if len(roots) != 1:
            log.warning("%s: expected exactly one root, found %d", sentence.sent_id, len(roots))
        for tok in sentence.tokens:
            if tok.head is not None and tok.head != 0 and tok.head not in content_ids:
                log.warning(
                    "%s: token %d head %d references a function word; kept verbatim",
                    sentence.sent_id,
                    tok.id,
                    tok.head,
                )
            if tok.is_content and tok.head is None:
                log.warning("%s: content token %d has no head", sentence.sent_id, tok.id)


def parse_conllu(text: str, strict: bool = True) -> list[Sentence]:
    """Parse a whole file's text into a list of sentences.

    Empty input gives an empty corpus.  Raises ConlluParseError (with a line
    number) for malformed lines and FormatError for structural problems.
    """
    sentences: list[Sentence] = []
    comments: list[str] = []
    rows: list[tuple[int, list[str]]] = []
    sent_id: str | None = None
    sent_text: str | None = None

    def flush() -> None:
        nonlocal comments, rows, sent_id, sent_text
        if not comments and not rows:
            return
        auto_id = sent_id if sent_id is not None else f"sent{len(sentences) + 1}"
        sentences.append(filter_abstract_nodes(RawSentence(auto_id, sent_text, comments, rows)))
        comments, rows, sent_id, sent_text = [], [], None, None

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            flush()
        elif line.startswith("#"):
            comments.append(line)
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                sent_id = body.split("=", 1)[1].strip()
            elif body.startswith("text") and body.split("=", 1)[0].strip() == "text":
                sent_text = body.split("=", 1)[1].strip()
        else:
            cols = line.split("\t")
            if len(cols) != NCOLS:
                raise ConlluParseError(
                    f"expected {NCOLS} tab-separated columns, got {len(cols)}", line=line_no
                )
            rows.append((line_no, cols))
    flush()
    return sentences


def read_conllu(path: str) -> list[Sentence]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f.read())


def serialize(sentence: Sentence) -> str:
    """Render one sentence as a CoNLL-U block (no trailing blank line)."""
    lines = list(sentence.comments)
    mwt_at = {tok_id: raw for tok_id, raw in sentence.mwt_lines}
    for tok in sentence.tokens:
        if tok.id in mwt_at:
            lines.append(mwt_at[tok.id])
        lines.append(
            "\t".join(
                (
                    str(tok.id),
                    tok.form,
                    tok.lemma,
                    tok.upos,
                    tok.xpos,
                    tok.feats_raw,
                    "_" if tok.head is None else str(tok.head),
                    tok.deprel if tok.deprel is not None else "_",
                    tok.deps,
                    tok.misc,
                )
            )
        )
    return "\n".join(lines)


def serialize_corpus(corpus: list[Sentence]) -> str:
    if not corpus:
        return ""
    return "\n\n".join(serialize(s) for s in corpus) + "\n"


def write_conllu(path: str, corpus: list[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_corpus(corpus))


@dataclass
class FeatureVocabulary:
    """Dense, stable indexing of atomic features and deprels seen in training."""

    features: list[AtomicFeature]
    deprels: list[str]
    frozen: bool = True

    def __post_init__(self) -> None:
        self._feat_index = {f: i for i, f in enumerate(self.features)}
        self._deprel_index = {d: i for i, d in enumerate(self.deprels)}

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_deprels(self) -> int:
        return len(self.deprels)

    def feature_index(self, atom: AtomicFeature) -> int | None:
        return self._feat_index.get(atom)

    def deprel_index(self, deprel: str) -> int | None:
        return self._deprel_index.get(deprel)

    def to_dict(self) -> dict:
        return {
            "features": [[a.cls, a.value] for a in self.features],
            "deprels": list(self.deprels),
        }

    @staticmethod
    def from_dict(d: dict) -> "FeatureVocabulary":
        return FeatureVocabulary(
            features=[AtomicFeature(cls, value) for cls, value in d["features"]],
            deprels=list(d["deprels"]),
        )


def build_feature_vocab(corpus: list[Sentence]) -> FeatureVocabulary:
    """Collect every atomic feature and deprel on content words, in
    lexicographic order so repeated runs index identically."""
    if not corpus:
        raise MorphoparseError("cannot build a feature vocabulary from an empty corpus")
    features: set[AtomicFeature] = set()
    deprels: set[str] = set()
    n_content = 0
    for sentence in corpus:
        for tok in sentence.content_tokens():
            n_content += 1
            features.update(tok.feats)
            if tok.deprel is not None:
                deprels.add(tok.deprel)
    if n_content == 0:
        raise MorphoparseError("corpus contains no content words; nothing to learn")
    return FeatureVocabulary(sorted(features), sorted(deprels))


def split_corpus(
    corpus: list[Sentence], ratio: float, seed: int
) -> tuple[list[Sentence], list[Sentence]]:
    """Deterministic shuffle-and-split; the first ceil(ratio*n) sentences of
    the shuffle go to the first part."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    if len(corpus) < 2:
        raise ConfigError("need at least 2 sentences to split")
    order = np.random.default_rng(seed).permutation(len(corpus))
    k = math.ceil(ratio * len(corpus))
    first = [corpus[i] for i in order[:k]]
    second = [corpus[i] for i in order[k:]]
    return first, second
