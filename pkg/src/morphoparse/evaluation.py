"""The three treebank metrics: LAS, Feats F1, and MSLAS.

Gold and system tokens are aligned by character spans over the concatenated
non-whitespace characters of the token forms (the standard treebank-eval
trick, so differing tokenizations still compare).  All metrics run over
content words only:

* LAS counts an aligned content pair correct when the system head aligns to
  the gold head (or both are root) and the deprel matches exactly.
* Feats F1 is micro-F1 over atomic (token, Class=Value) items; items on
  unaligned tokens count as misses/false alarms.
* MSLAS is Feats F1 where a token's predicted items only count as true
  positives if that token is LAS-correct.
"""

from __future__ import annotations

from dataclasses import dataclass

from .conllu import Sentence
from .errors import AlignmentError, EvaluationError


@dataclass(frozen=True)
class Score:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return 100.0 * self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return 100.0 * self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 100.0 * 2 * self.tp / denom if denom else 0.0

    def as_dict(self) -> dict:
        return {
            "p": round(self.precision, 1),
            "r": round(self.recall, 1),
            "f1": round(self.f1, 1),
        }


@dataclass
class MetricReport:
    mslas: Score
    las: Score
    feats: Score

    def as_dict(self) -> dict:
        return {
            "mslas": self.mslas.as_dict(),
            "las": self.las.as_dict(),
            "feats": self.feats.as_dict(),
            "counts": {
                name: {"tp": s.tp, "fp": s.fp, "fn": s.fn}
                for name, s in (("mslas", self.mslas), ("las", self.las), ("feats", self.feats))
            },
        }

    def table(self) -> str:
        rows = [("MSLAS", self.mslas), ("LAS", self.las), ("Feats", self.feats)]
        lines = [f"{'Metric':<8}{'P':>8}{'R':>8}{'F1':>8}"]
        for name, s in rows:
            lines.append(f"{name:<8}{s.precision:>8.1f}{s.recall:>8.1f}{s.f1:>8.1f}")
        return "\n".join(lines)


@dataclass
class Alignment:
    """Index pairs of tokens whose non-whitespace character spans coincide."""

    matched: list[tuple[int, int]]
    unmatched_gold: list[int]
    unmatched_sys: list[int]


def _char_spans(sentence: Sentence) -> tuple[str, list[tuple[int, int]]]:
    chars: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for tok in sentence.tokens:
        stripped = "".join(c for c in tok.form if not c.isspace())
        chars.append(stripped)
        spans.append((pos, pos + len(stripped)))
        pos += len(stripped)
    return "".join(chars), spans


def align_tokens(gold: Sentence, system: Sentence) -> Alignment:
    """Match tokens with identical character spans (a longest common
    subsequence, since both span lists are strictly ordered)."""
    gold_chars, gold_spans = _char_spans(gold)
    sys_chars, sys_spans = _char_spans(system)
    if not gold.tokens or not system.tokens:
        # an empty side has nothing to align; everything is unmatched
        return Alignment(
            matched=[],
            unmatched_gold=list(range(len(gold.tokens))),
            unmatched_sys=list(range(len(system.tokens))),
        )
    if gold_chars != sys_chars:
        raise AlignmentError(
            f"sentence {gold.sent_id!r}: gold and system token characters differ"
        )
    matched = []
    gi = si = 0
    while gi < len(gold_spans) and si < len(sys_spans):
        g, s = gold_spans[gi], sys_spans[si]
        if g == s:
            matched.append((gi, si))
            gi += 1
            si += 1
        elif g[1] <= s[1] and g != s:
            gi += 1
        else:
            si += 1
    matched_gold = {g for g, _ in matched}
    matched_sys = {s for _, s in matched}
    return Alignment(
        matched=matched,
        unmatched_gold=[i for i in range(len(gold_spans)) if i not in matched_gold],
        unmatched_sys=[i for i in range(len(sys_spans)) if i not in matched_sys],
    )


def _evaluate(
    gold_corpus: list[Sentence],
    sys_corpus: list[Sentence],
    feats_filter=None,
) -> MetricReport:
    if len(gold_corpus) != len(sys_corpus):
        gold_ids = [s.sent_id for s in gold_corpus]
        sys_ids = [s.sent_id for s in sys_corpus]
        raise EvaluationError(
            f"sentence count mismatch: {len(gold_corpus)} gold vs {len(sys_corpus)} system "
            f"(gold ids {gold_ids[:5]}..., system ids {sys_ids[:5]}...)"
        )
    keep = feats_filter if feats_filter is not None else (lambda atom: True)

    las_tp = las_fp = las_fn = 0
    f_tp = f_fp = f_fn = 0
    m_tp = m_fp = m_fn = 0

    for gold, system in zip(gold_corpus, sys_corpus):
        alignment = align_tokens(gold, system)
        gold_content = sum(1 for t in gold.tokens if t.is_content)
        sys_content = sum(1 for t in system.tokens if t.is_content)

        sys_to_gold = {s: g for g, s in alignment.matched}
        las_correct = 0

        for gi, si in alignment.matched:
            g_tok, s_tok = gold.tokens[gi], system.tokens[si]
            g_feats = {a for a in g_tok.feats if keep(a)}
            s_feats = {a for a in s_tok.feats if keep(a)}

            correct = False
            if g_tok.is_content and s_tok.is_content:
                correct = _head_matches(gold, system, gi, si, sys_to_gold) and (
                    g_tok.deprel == s_tok.deprel
                )
                if correct:
                    las_correct += 1

            both = g_feats & s_feats
            f_tp += len(both)
            f_fp += len(s_feats - g_feats)
            f_fn += len(g_feats - s_feats)
            if correct:
                m_tp += len(both)
                m_fp += len(s_feats - g_feats)
                m_fn += len(g_feats - s_feats)
            else:
                m_fp += len(s_feats)
                m_fn += len(g_feats)

        for gi in alignment.unmatched_gold:
            items = sum(1 for a in gold.tokens[gi].feats if keep(a))
            f_fn += items
            m_fn += items
        for si in alignment.unmatched_sys:
            items = sum(1 for a in system.tokens[si].feats if keep(a))
            f_fp += items
            m_fp += items

        las_tp += las_correct
        las_fp += sys_content - las_correct
        las_fn += gold_content - las_correct

    return MetricReport(
        mslas=Score(m_tp, m_fp, m_fn),
        las=Score(las_tp, las_fp, las_fn),
        feats=Score(f_tp, f_fp, f_fn),
    )


def _head_matches(
    gold: Sentence,
    system: Sentence,
    gi: int,
    si: int,
    sys_to_gold: dict[int, int],
) -> bool:
    g_head = gold.tokens[gi].head
    s_head = system.tokens[si].head
    if g_head is None or s_head is None:
        return False
    if g_head == 0 or s_head == 0:
        return g_head == s_head == 0
    # map the system head token onto gold through the alignment
    s_head_idx = _index_of_id(system, s_head)
    g_head_idx = _index_of_id(gold, g_head)
    if s_head_idx is None or g_head_idx is None:
        return False
    return sys_to_gold.get(s_head_idx) == g_head_idx


def _index_of_id(sentence: Sentence, tok_id: int) -> int | None:
    idx = tok_id - 1
    if 0 <= idx < len(sentence.tokens) and sentence.tokens[idx].id == tok_id:
        return idx
    for i, tok in enumerate(sentence.tokens):  # non-contiguous ids; linear scan
        if tok.id == tok_id:
            return i
    return None


def evaluate_corpora(gold_corpus: list[Sentence], sys_corpus: list[Sentence]) -> MetricReport:
    return _evaluate(gold_corpus, sys_corpus)


def las(gold_corpus: list[Sentence], sys_corpus: list[Sentence]) -> Score:
    return _evaluate(gold_corpus, sys_corpus).las


def feats_f1(gold_corpus: list[Sentence], sys_corpus: list[Sentence]) -> Score:
    return _evaluate(gold_corpus, sys_corpus).feats


def mslas(gold_corpus: list[Sentence], sys_corpus: list[Sentence]) -> Score:
    return _evaluate(gold_corpus, sys_corpus).mslas


def feats_f1_filtered(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence], feats_filter
) -> Score:
    """Feats F1 restricted to atoms accepted by `feats_filter` (used by the
    spatial-case analysis)."""
    return _evaluate(gold_corpus, sys_corpus, feats_filter=feats_filter).feats


def report(gold_path: str, sys_path: str) -> MetricReport:
    from .conllu import read_conllu

    return evaluate_corpora(read_conllu(gold_path), read_conllu(sys_path))
