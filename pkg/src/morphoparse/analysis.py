"""Error analysis over an aligned (gold, system) corpus pair: per-class
feature confusions, deprel confusions, attachment-distance and direction
breakdowns of head errors, and spatial-case subset metrics.

Confusion labels for a feature class are the full serialized value set
(`Fem;Masc` stays one label, distinct from `Fem`), so syncretic forms are
visible as their own categories.  `_` stands for "no value on this side".
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .conllu import Sentence
from .errors import ConfigError, MorphoparseError
from .evaluation import Score, _head_matches, align_tokens, feats_f1_filtered

ROOT_BUCKET = "root"
DIRECTIONS = ("LEFT", "RIGHT", "ROOT")


@dataclass
class ConfusionTable:
    scope: str
    counts: Counter = field(default_factory=Counter)

    def add(self, gold_label: str, pred_label: str) -> None:
        self.counts[(gold_label, pred_label)] += 1

    @property
    def gold_labels(self) -> list[str]:
        return sorted({g for g, _ in self.counts})

    @property
    def pred_labels(self) -> list[str]:
        return sorted({p for _, p in self.counts})

    def errors(self, top_k: int | None = None) -> list[tuple[int, str, str]]:
        """Off-diagonal cells as (count, gold, predicted), most frequent first."""
        rows = sorted(
            ((c, g, p) for (g, p), c in self.counts.items() if g != p),
            key=lambda row: (-row[0], row[1], row[2]),
        )
        return rows if top_k is None else rows[:top_k]

    def diagonal(self) -> int:
        return sum(c for (g, p), c in self.counts.items() if g == p)

    def off_diagonal(self) -> int:
        return sum(c for (g, p), c in self.counts.items() if g != p)

    def to_text(self) -> str:
        golds, preds = self.gold_labels, self.pred_labels
        width = max([len(x) for x in golds + preds + [self.scope]] + [6]) + 2
        lines = ["".join([f"{self.scope:<{width}}"] + [f"{p:>{width}}" for p in preds])]
        for g in golds:
            cells = [f"{self.counts.get((g, p), 0):>{width}}" for p in preds]
            lines.append("".join([f"{g:<{width}}"] + cells))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "cells": [[g, p, c] for (g, p), c in sorted(self.counts.items())],
        }


def _iter_aligned(gold_corpus: list[Sentence], sys_corpus: list[Sentence]):
    """Yield (gold sentence, sys sentence, aligned index pairs, sys->gold map)."""
    if len(gold_corpus) != len(sys_corpus):
        raise MorphoparseError(
            f"corpus size mismatch: {len(gold_corpus)} vs {len(sys_corpus)}"
        )
    for gold, system in zip(gold_corpus, sys_corpus):
        alignment = align_tokens(gold, system)
        sys_to_gold = {s: g for g, s in alignment.matched}
        yield gold, system, alignment.matched, sys_to_gold


def _class_label(token, cls: str) -> str:
    values = sorted(a.value for a in token.feats if a.cls == cls)
    return ";".join(values) if values else "_"


def feature_confusions(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence], cls: str
) -> ConfusionTable:
    """Gold-vs-predicted value sets of one feature class over aligned tokens
    where at least one side is content and one side has a value."""
    observed = {
        a.cls
        for corpus in (gold_corpus, sys_corpus)
        for sentence in corpus
        for tok in sentence.tokens
        for a in tok.feats
    }
    if cls not in observed:
        raise MorphoparseError(f"feature class {cls!r} does not occur in either corpus")
    table = ConfusionTable(scope=cls)
    for gold, system, matched, _ in _iter_aligned(gold_corpus, sys_corpus):
        for gi, si in matched:
            g_tok, s_tok = gold.tokens[gi], system.tokens[si]
            if not (g_tok.is_content or s_tok.is_content):
                continue
            g_label = _class_label(g_tok, cls)
            p_label = _class_label(s_tok, cls)
            if g_label == p_label == "_":
                continue
            table.add(g_label, p_label)
    return table


@dataclass
class DeprelConfusions:
    #: aligned, both content, head correct, deprel differs
    label_errors: ConfusionTable
    #: content/function disagreements, `_` on the function side
    cwi_errors: ConfusionTable

    def merged(self, top_k: int | None = None) -> list[tuple[int, str, str]]:
        combined = Counter(self.label_errors.counts) + Counter(self.cwi_errors.counts)
        rows = sorted(
            ((c, g, p) for (g, p), c in combined.items()),
            key=lambda row: (-row[0], row[1], row[2]),
        )
        return rows if top_k is None else rows[:top_k]


def deprel_confusions(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence], top_k: int | None = None
) -> list[tuple[int, str, str]]:
    return deprel_confusion_tables(gold_corpus, sys_corpus).merged(top_k)


def deprel_confusion_tables(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence]
) -> DeprelConfusions:
    label_errors = ConfusionTable(scope="deprel")
    cwi_errors = ConfusionTable(scope="deprel/cwi")
    for gold, system, matched, sys_to_gold in _iter_aligned(gold_corpus, sys_corpus):
        for gi, si in matched:
            g_tok, s_tok = gold.tokens[gi], system.tokens[si]
            if g_tok.is_content and s_tok.is_content:
                if _head_matches(gold, system, gi, si, sys_to_gold) and (
                    g_tok.deprel != s_tok.deprel
                ):
                    label_errors.add(g_tok.deprel or "_", s_tok.deprel or "_")
            elif g_tok.is_content and not s_tok.is_content:
                cwi_errors.add(g_tok.deprel or "_", "_")
            elif s_tok.is_content and not g_tok.is_content:
                cwi_errors.add("_", s_tok.deprel or "_")
    return DeprelConfusions(label_errors, cwi_errors)


@dataclass
class DistanceHistogram:
    """Gold vs predicted attachment distances of head-error tokens."""

    gold: Counter = field(default_factory=Counter)
    predicted: Counter = field(default_factory=Counter)
    n_errors: int = 0

    def buckets(self) -> list:
        keys = {k for k in (*self.gold, *self.predicted) if k != ROOT_BUCKET}
        out: list = sorted(keys)
        if ROOT_BUCKET in self.gold or ROOT_BUCKET in self.predicted:
            out.append(ROOT_BUCKET)
        return out

    def to_text(self) -> str:
        lines = [f"{'distance':>10}{'gold':>8}{'predicted':>11}"]
        for key in self.buckets():
            lines.append(
                f"{key!s:>10}{self.gold.get(key, 0):>8}{self.predicted.get(key, 0):>11}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "gold": {str(k): v for k, v in sorted(self.gold.items(), key=lambda x: str(x[0]))},
            "predicted": {
                str(k): v for k, v in sorted(self.predicted.items(), key=lambda x: str(x[0]))
            },
            "n_errors": self.n_errors,
        }


def _head_error_pairs(gold_corpus, sys_corpus):
    """Aligned both-content pairs with a wrong (but present) head assignment."""
    for gold, system, matched, sys_to_gold in _iter_aligned(gold_corpus, sys_corpus):
        for gi, si in matched:
            g_tok, s_tok = gold.tokens[gi], system.tokens[si]
            if not (g_tok.is_content and s_tok.is_content):
                continue
            if g_tok.head is None or s_tok.head is None:
                continue
            if not _head_matches(gold, system, gi, si, sys_to_gold):
                yield g_tok, s_tok


def _distance(head: int, dep_id: int, signed: bool):
    if head == 0:
        return ROOT_BUCKET
    return head - dep_id if signed else abs(head - dep_id)


def attachment_distance_histogram(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence], signed: bool = False
) -> DistanceHistogram:
    hist = DistanceHistogram()
    for g_tok, s_tok in _head_error_pairs(gold_corpus, sys_corpus):
        hist.gold[_distance(g_tok.head, g_tok.id, signed)] += 1
        hist.predicted[_distance(s_tok.head, s_tok.id, signed)] += 1
        hist.n_errors += 1
    return hist


def _direction(head: int, dep_id: int) -> str:
    if head == 0:
        return "ROOT"
    return "LEFT" if head < dep_id else "RIGHT"


def direction_confusion(
    gold_corpus: list[Sentence], sys_corpus: list[Sentence]
) -> ConfusionTable:
    """Gold vs predicted attachment direction over head-error tokens."""
    table = ConfusionTable(scope="direction")
    for g_tok, s_tok in _head_error_pairs(gold_corpus, sys_corpus):
        table.add(_direction(g_tok.head, g_tok.id), _direction(s_tok.head, s_tok.id))
    return table


def spatial_case_metrics(
    gold_corpus: list[Sentence],
    sys_corpus: list[Sentence],
    spatial_values: list[str],
) -> Score:
    """Micro P/R/F1 over Case atoms whose value is in the supplied inventory."""
    if not spatial_values:
        raise ConfigError("the spatial case inventory is empty")
    wanted = set(spatial_values)
    return feats_f1_filtered(
        gold_corpus,
        sys_corpus,
        lambda atom: atom.cls == "Case" and atom.value in wanted,
    )


def load_spatial_values(path: str) -> list[str]:
    values = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            entry = line.strip()
            if entry and not entry.startswith("#"):
                values.append(entry)
    return values
