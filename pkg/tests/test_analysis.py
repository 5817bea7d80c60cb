import pytest

from morphoparse import analysis, evaluation
from morphoparse.conllu import AtomicFeature, parse_conllu, serialize_corpus
from morphoparse.errors import ConfigError, MorphoparseError


def sent(*rows):
    lines = []
    for i, (form, feats, head, deprel) in enumerate(rows, start=1):
        head = "_" if head is None else str(head)
        lines.append(f"{i}\t{form}\t_\t_\t_\t{feats}\t{head}\t{deprel or '_'}\t_\t_")
    return parse_conllu("\n".join(lines) + "\n")


GOLD = sent(
    ("From", "_", None, None),
    ("house", "Case=Abl|Gender=Masc|Number=Sing", 3, "obl"),
    ("comes", "Mood=Ind", 0, "root"),
    ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
)


class TestFeatureConfusions:
    def test_perfect_predictions_are_diagonal(self):
        table = analysis.feature_confusions(GOLD, GOLD, "Case")
        assert table.off_diagonal() == 0
        assert table.diagonal() == 2

    def test_single_confusion_cell(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Gender=Fem|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
        )
        table = analysis.feature_confusions(GOLD, system, "Gender")
        assert table.counts[("Masc", "Fem")] == 1
        assert table.counts[("Fem", "Fem")] == 1

    def test_syncretic_value_set_is_one_label(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Gender=Fem,Masc|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
        )
        table = analysis.feature_confusions(GOLD, system, "Gender")
        assert table.counts[("Masc", "Fem;Masc")] == 1

    def test_absent_side_is_underscore(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Number=Sing", 3, "obl"),  # gender dropped
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
        )
        table = analysis.feature_confusions(GOLD, system, "Gender")
        assert table.counts[("Masc", "_")] == 1

    def test_unknown_class_is_error(self):
        with pytest.raises(MorphoparseError, match="does not occur"):
            analysis.feature_confusions(GOLD, GOLD, "Aspect")

    def test_error_rows_sorted_by_count(self):
        gold = sent(
            ("a", "Case=Nom", 0, "root"),
            ("b", "Case=Nom", 1, "obj"),
            ("c", "Case=Gen", 1, "obl"),
        )
        system = sent(
            ("a", "Case=Acc", 0, "root"),
            ("b", "Case=Acc", 1, "obj"),
            ("c", "Case=Nom", 1, "obl"),
        )
        rows = analysis.feature_confusions(gold, system, "Case").errors()
        assert rows == [(2, "Nom", "Acc"), (1, "Gen", "Nom")]

    def test_off_diagonal_matches_mismatch_count(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Ine|Gender=Masc|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Dat|Gender=Fem", 3, "nsubj"),
        )
        table = analysis.feature_confusions(GOLD, system, "Case")
        assert table.off_diagonal() == 2


class TestDeprelConfusions:
    def test_no_errors_empty(self):
        assert analysis.deprel_confusions(GOLD, GOLD) == []

    def test_swapped_labels_make_two_rows(self):
        gold = sent(
            ("a", "Case=Nom", 3, "nmod"),
            ("b", "Case=Nom", 3, "obl"),
            ("c", "Mood=Ind", 0, "root"),
        )
        system = sent(
            ("a", "Case=Nom", 3, "obl"),
            ("b", "Case=Nom", 3, "nmod"),
            ("c", "Mood=Ind", 0, "root"),
        )
        rows = analysis.deprel_confusions(gold, system)
        assert (1, "nmod", "obl") in rows and (1, "obl", "nmod") in rows

    def test_content_predicted_function_row(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Gender=Masc|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "_", None, None),  # gold nsubj lost to CWI
        )
        rows = analysis.deprel_confusions(GOLD, system)
        assert (1, "nsubj", "_") in rows

    def test_label_errors_require_correct_head(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Gender=Masc|Number=Sing", 4, "nmod"),  # head also wrong
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
        )
        tables = analysis.deprel_confusion_tables(GOLD, system)
        assert sum(tables.label_errors.counts.values()) == 0

    def test_top_k_caps_rows(self):
        gold = sent(*[(f"w{i}", "Case=Nom", 0 if i == 1 else 1, "root" if i == 1 else f"r{i}")
                      for i in range(1, 7)])
        system = sent(*[(f"w{i}", "Case=Nom", 0 if i == 1 else 1, "root" if i == 1 else f"x{i}")
                        for i in range(1, 7)])
        assert len(analysis.deprel_confusions(gold, system, top_k=3)) == 3


class TestAttachmentDistance:
    def test_no_errors_empty_histogram(self):
        hist = analysis.attachment_distance_histogram(GOLD, GOLD)
        assert hist.n_errors == 0 and not hist.gold and not hist.predicted

    def test_gold_adjacent_predicted_three_away(self):
        gold = sent(
            ("a", "Case=Nom", 2, "nsubj"),
            ("b", "Mood=Ind", 0, "root"),
            ("c", "Case=Nom", 2, "obj"),
            ("d", "Case=Gen", 3, "nmod"),
        )
        system = sent(
            ("a", "Case=Nom", 4, "nsubj"),  # gold head distance 1, predicted 3
            ("b", "Mood=Ind", 0, "root"),
            ("c", "Case=Nom", 2, "obj"),
            ("d", "Case=Gen", 3, "nmod"),
        )
        hist = analysis.attachment_distance_histogram(gold, system)
        assert hist.gold == {1: 1}
        assert hist.predicted == {3: 1}
        assert hist.n_errors == 1

    def test_series_totals_equal_error_count(self, toy_corpus):
        gold = toy_corpus[:6]
        system = parse_conllu(serialize_corpus(gold))
        for s in system:
            for tok in s.tokens:
                if tok.is_content and tok.head not in (None, 0):
                    tok.head = 0 if tok.head != 0 else 1  # break every non-root head
        hist = analysis.attachment_distance_histogram(gold, system)
        assert sum(hist.gold.values()) == hist.n_errors
        assert sum(hist.predicted.values()) == hist.n_errors

    def test_root_bucket_and_signed(self):
        gold = sent(("a", "Case=Nom", 2, "nsubj"), ("b", "Mood=Ind", 0, "root"))
        system = sent(("a", "Case=Nom", 0, "root"), ("b", "Mood=Ind", 2, "root"))
        hist = analysis.attachment_distance_histogram(gold, system, signed=True)
        assert hist.gold == {1: 1, analysis.ROOT_BUCKET: 1}
        assert hist.predicted[analysis.ROOT_BUCKET] == 1


class TestDirectionConfusion:
    def test_direction_preserving_errors_are_diagonal(self):
        gold = sent(
            ("a", "Case=Nom", 3, "nsubj"),
            ("b", "Case=Nom", 3, "obj"),
            ("c", "Mood=Ind", 0, "root"),
        )
        system = sent(
            ("a", "Case=Nom", 2, "nsubj"),  # wrong head, but still to the right
            ("b", "Case=Nom", 3, "obj"),
            ("c", "Mood=Ind", 0, "root"),
        )
        table = analysis.direction_confusion(gold, system)
        assert table.counts[("RIGHT", "RIGHT")] == 1
        assert table.off_diagonal() == 0

    def test_left_to_right_flip(self):
        gold = sent(
            ("a", "Mood=Ind", 0, "root"),
            ("b", "Case=Nom", 1, "obj"),  # head to the left
            ("c", "Case=Nom", 1, "obl"),
        )
        system = sent(
            ("a", "Mood=Ind", 0, "root"),
            ("b", "Case=Nom", 3, "obj"),  # head now to the right
            ("c", "Case=Nom", 1, "obl"),
        )
        table = analysis.direction_confusion(gold, system)
        assert table.counts[("LEFT", "RIGHT")] == 1

    def test_totals_match_error_count(self):
        gold = sent(("a", "Case=Nom", 2, "nsubj"), ("b", "Mood=Ind", 0, "root"))
        system = sent(("a", "Case=Nom", 0, "nsubj"), ("b", "Mood=Ind", 2, "root"))
        table = analysis.direction_confusion(gold, system)
        hist = analysis.attachment_distance_histogram(gold, system)
        assert sum(table.counts.values()) == hist.n_errors == 2


class TestSpatialCase:
    def test_perfect(self):
        score = analysis.spatial_case_metrics(GOLD, GOLD, ["Abl", "Ine"])
        assert score.f1 == 100.0

    def test_miss_on_spatial_value(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Gen|Gender=Masc|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Nom|Gender=Fem", 3, "nsubj"),
        )
        score = analysis.spatial_case_metrics(GOLD, system, ["Abl"])
        assert score.fn == 1 and score.fp == 0
        assert score.recall == 0.0

    def test_values_outside_list_ignored(self):
        system = sent(
            ("From", "_", None, None),
            ("house", "Case=Abl|Gender=Masc|Number=Sing", 3, "obl"),
            ("comes", "Mood=Ind", 0, "root"),
            ("rain", "Case=Dat|Gender=Fem", 3, "nsubj"),  # Nom->Dat, not spatial
        )
        score = analysis.spatial_case_metrics(GOLD, system, ["Abl"])
        assert score.f1 == 100.0

    def test_empty_inventory_rejected(self):
        with pytest.raises(ConfigError):
            analysis.spatial_case_metrics(GOLD, GOLD, [])

    def test_all_case_values_equals_case_slice_of_feats(self, toy_corpus):
        gold = toy_corpus[:10]
        system = parse_conllu(serialize_corpus(gold))
        for s in system[:4]:  # perturb some case atoms
            for tok in s.tokens:
                if any(a.cls == "Case" for a in tok.feats):
                    tok.feats = frozenset(a for a in tok.feats if a.cls != "Case") | {
                        AtomicFeature("Case", "Nom")
                    }
        all_values = sorted({a.value for s in gold for t in s.tokens for a in t.feats
                             if a.cls == "Case"} |
                            {a.value for s in system for t in s.tokens for a in t.feats
                             if a.cls == "Case"})
        spatial = analysis.spatial_case_metrics(gold, system, all_values)
        case_slice = evaluation.feats_f1_filtered(gold, system, lambda a: a.cls == "Case")
        assert (spatial.tp, spatial.fp, spatial.fn) == (
            case_slice.tp,
            case_slice.fp,
            case_slice.fn,
        )

    def test_loader(self, tmp_path):
        path = tmp_path / "spatial.txt"
        path.write_text("# comment\nAbl\n\nIne\n", encoding="utf-8")
        assert analysis.load_spatial_values(str(path)) == ["Abl", "Ine"]

    def test_bundled_inventory_loads(self):
        from morphoparse.bundled import spatial_cases_path

        values = analysis.load_spatial_values(spatial_cases_path())
        assert "Abl" in values and "Ine" in values and len(values) >= 10
