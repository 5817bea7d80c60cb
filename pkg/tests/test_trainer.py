import math

import numpy as np
import pytest

from conftest import tiny_model_config
from morphoparse import trainer
from morphoparse.conllu import parse_conllu
from morphoparse.errors import ConfigError, MorphoparseError
from morphoparse.model import prepare_example
from morphoparse.nn import AdamW


def tiny_train_config(**overrides):
    base = dict(max_epochs=3, batch_size=8, seed=0, model=tiny_model_config())
    base.update(overrides)
    return trainer.TrainConfig(**base)


class TestJointLoss:
    def test_default_weights_arithmetic(self):
        config = trainer.TrainConfig()
        assert trainer.joint_loss(1.0, 1.0, 1.0, config) == pytest.approx(4.5)

    def test_turkish_preset_arithmetic(self):
        config = trainer.preset_config("turkish")
        assert (config.w_parser, config.w_morph, config.w_cwi) == (2.0, 2.0, 1.5)
        assert trainer.joint_loss(1.0, 1.0, 1.0, config) == pytest.approx(5.5)

    def test_single_task_weights(self):
        config = trainer.TrainConfig(w_parser=0.0, w_morph=0.0, w_cwi=3.0)
        assert trainer.joint_loss(9.9, 2.3, 0.5, config) == pytest.approx(1.5)

    def test_formula_machine_precision(self, rng):
        config = trainer.TrainConfig(w_parser=1.7, w_morph=0.3, w_cwi=2.2)
        for _ in range(50):
            lp, lm, lc = rng.random(3) * 10
            assert trainer.joint_loss(lp, lm, lc, config) == 1.7 * lp + 0.3 * lm + 2.2 * lc

    def test_non_finite_rejected(self):
        with pytest.raises(MorphoparseError):
            trainer.joint_loss(math.inf, 0.0, 0.0, trainer.TrainConfig())

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ConfigError):
            trainer.TrainConfig(w_parser=0.0, w_morph=0.0, w_cwi=0.0)


class TestPresets:
    def test_table_of_presets(self):
        expected = {
            "czech": (2.0, 1.5, 1.0),
            "english": (2.0, 1.5, 1.0),
            "hebrew": (2.0, 1.5, 1.0),
            "italian": (2.0, 1.5, 1.0),
            "polish": (2.0, 1.5, 1.0),
            "portuguese": (2.0, 1.5, 1.0),
            "serbian": (2.0, 1.5, 1.0),
            "swedish": (2.0, 1.5, 1.5),
            "turkish": (2.0, 2.0, 1.5),
        }
        assert trainer.PRESETS == expected

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            trainer.preset_config("klingon")

    def test_default_grid_is_the_distinct_presets(self):
        assert trainer.DEFAULT_GRID == [(2.0, 1.5, 1.0), (2.0, 1.5, 1.5), (2.0, 2.0, 1.5)]


class TestLrDefaults:
    def test_scratch_default(self):
        assert trainer.TrainConfig().resolved_lr() == pytest.approx(1e-3)

    def test_external_default(self, tmp_path):
        from morphoparse.encoder import EncoderConfig
        from morphoparse.model import ModelConfig

        emb = tmp_path / "e.txt"
        emb.write_text("a\t1.0\n")
        cfg = trainer.TrainConfig(
            model=ModelConfig(
                encoder=EncoderConfig(provider="external_file", external_path=str(emb))
            )
        )
        assert cfg.resolved_lr() == pytest.approx(2e-5)

    def test_explicit_lr_wins(self):
        assert trainer.TrainConfig(lr=0.5).resolved_lr() == 0.5


class TestTrainLoop:
    def test_empty_corpus_rejected(self):
        with pytest.raises(MorphoparseError):
            trainer.train([], None, tiny_train_config())

    def test_max_epochs_respected(self, toy_corpus):
        config = tiny_train_config(max_epochs=2, patience=10)
        _, track = trainer.train(toy_corpus[:8], None, config)
        assert track.stop_epoch == 2 and track.stop_reason == "max_epochs"
        assert [e.epoch for e in track.epochs] == [1, 2]

    def test_no_dev_warns_and_monitors_train(self, toy_corpus, caplog):
        with caplog.at_level("WARNING"):
            _, track = trainer.train(toy_corpus[:4], None, tiny_train_config(max_epochs=1))
        assert any("no dev corpus" in r.message for r in caplog.records)
        assert track.epochs[0].dev is None

    def test_determinism_same_seed(self, toy_corpus, tmp_path):
        from morphoparse.model import save_checkpoint

        config = tiny_train_config(max_epochs=2)
        runs = []
        for name in ("a", "b"):
            model, track = trainer.train(toy_corpus[:10], toy_corpus[10:14], config)
            path = tmp_path / f"{name}.ckpt"
            save_checkpoint(str(path), model)
            runs.append((path.read_bytes(), track.to_dict()))
        assert runs[0][0] == runs[1][0]  # bit-identical checkpoints
        assert runs[0][1] == runs[1][1]  # identical logs

    def test_different_seeds_differ(self, toy_corpus):
        a, _ = trainer.train(toy_corpus[:6], None, tiny_train_config(seed=0, max_epochs=1))
        b, _ = trainer.train(toy_corpus[:6], None, tiny_train_config(seed=1, max_epochs=1))
        assert any(
            not np.array_equal(p.value, q.value) for p, q in zip(a.params(), b.params())
        )

    def test_single_sentence_epoch_decreases_loss(self, toy_corpus):
        # gradient-flow check: small steps on one sentence reduce its loss
        corpus = toy_corpus[:1]
        config = tiny_train_config(lr=1e-4, max_epochs=1, word_dropout=0.0)
        from morphoparse.conllu import build_feature_vocab
        from morphoparse.model import JointModel, corpus_cwi_weights

        vocab = build_feature_vocab(corpus)
        model = JointModel(config.model, vocab, seed=0, cwi_weights=corpus_cwi_weights(corpus))
        ex = prepare_example(corpus[0], vocab)
        before = model.sentence_losses(ex, config.weights)["total"]
        opt = AdamW(model.params(), lr=1e-4, weight_decay=0.0)
        opt.zero_grad()
        model.sentence_losses(ex, config.weights, grad_scale=1.0)
        opt.step()
        after = model.sentence_losses(ex, config.weights)["total"]
        assert after < before

    def test_gold_content_rows_feed_parser_loss(self, toy_corpus, monkeypatch):
        # instrument arc_scores to observe the number of rows it receives
        from morphoparse.conllu import build_feature_vocab
        from morphoparse.model import JointModel, corpus_cwi_weights

        corpus = toy_corpus[:1]
        vocab = build_feature_vocab(corpus)
        model = JointModel(tiny_model_config(), vocab, seed=0)
        ex = prepare_example(corpus[0], vocab)
        seen = []
        original = model.biaffine.arc_scores
        monkeypatch.setattr(
            model.biaffine, "arc_scores", lambda h: (seen.append(h.shape), original(h))[1]
        )
        model.sentence_losses(ex, (2.0, 1.5, 1.0))
        assert seen == [(len(ex.content_idx), model.config.shared_hidden)]

    def test_lr_plateau_reduction_and_stop(self, toy_corpus):
        # lr 0 with all dropout off cannot improve: epoch 1 sets the best,
        # every later epoch is an exact plateau, so with patience 1 the lr
        # halves at epochs 2 and 3 and training stops
        config = tiny_train_config(
            lr=0.0,
            max_epochs=10,
            patience=1,
            word_dropout=0.0,
            model=tiny_model_config(shared_dropout=0.0, cwi_dropout=0.0),
        )
        _, track = trainer.train(toy_corpus[:4], None, config)
        assert track.stop_reason == "lr_plateau"
        assert track.stop_epoch == 3
        lrs = [e.lr for e in track.epochs]
        assert lrs[-1] == pytest.approx(0.0)

    def test_best_epoch_parameters_returned(self, toy_corpus):
        config = tiny_train_config(max_epochs=3)
        model, track = trainer.train(toy_corpus[:10], toy_corpus[10:12], config)
        assert 1 <= track.best_epoch <= 3


class TestSingleSentenceOverfit:
    def test_example_sentence_memorized(self, table1_corpus):
        # a tiny model driven hard on one sentence must recover its CWI
        # labels, tree, and the first noun's full feature set
        from morphoparse import evaluation, pipeline
        from morphoparse.conllu import AtomicFeature

        config = trainer.TrainConfig(
            lr=5e-3,
            max_epochs=80,
            patience=20,
            batch_size=1,
            word_dropout=0.0,
            seed=0,
            model=tiny_model_config(
                shared_hidden=32, cwi_hidden=16, arc_mlp=12, rel_mlp=8,
                shared_dropout=0.0, cwi_dropout=0.0,
            ),
        )
        model, _ = trainer.train(table1_corpus, None, config, compute_dev_metrics=False)
        predicted, _ = pipeline.predict(model, table1_corpus)
        assert [t.is_content for t in predicted[0].tokens] == [
            False, False, True, True, True, True, False,
        ]
        report = evaluation.evaluate_corpora(table1_corpus, predicted)
        assert report.las.f1 == 100.0
        ap = predicted[0].tokens[2]
        assert ap.feats == {
            AtomicFeature("Case", "Abl"),
            AtomicFeature("Definite", "Def"),
            AtomicFeature("Number", "Sing"),
        }


class TestGridSearch:
    def test_singleton_grid_returns_it(self, toy_corpus):
        best, rows = trainer.grid_search_weights(
            toy_corpus[:8],
            toy_corpus[8:10],
            grid=[(1.0, 1.0, 1.0)],
            base=tiny_train_config(max_epochs=1),
        )
        assert (best.w_parser, best.w_morph, best.w_cwi) == (1.0, 1.0, 1.0)
        assert len(rows) == 1

    def test_identical_triples_tie_stably(self, toy_corpus):
        best, rows = trainer.grid_search_weights(
            toy_corpus[:8],
            toy_corpus[8:10],
            grid=[(2.0, 1.5, 1.0), (2.0, 1.5, 1.0)],
            base=tiny_train_config(max_epochs=1),
        )
        assert rows[0]["mslas"] == rows[1]["mslas"]
        assert rows[0] == rows[1]

    def test_empty_grid_rejected(self, toy_corpus):
        with pytest.raises(ConfigError):
            trainer.grid_search_weights(toy_corpus[:4], toy_corpus[4:6], grid=[])

    def test_needs_dev(self, toy_corpus):
        with pytest.raises(ConfigError):
            trainer.grid_search_weights(toy_corpus[:4], [], grid=[(1, 1, 1)])


class TestConfigIO:
    def test_json_round_trip(self, tmp_path):
        config = tiny_train_config(lr=0.01, w_morph=2.5)
        path = tmp_path / "config.json"
        import json

        path.write_text(json.dumps(config.to_dict()))
        again = trainer.TrainConfig.from_json_file(str(path))
        assert again == config

    def test_validation(self):
        with pytest.raises(ConfigError):
            trainer.TrainConfig(patience=-1)
        with pytest.raises(ConfigError):
            trainer.TrainConfig(lr_factor=1.0)
        with pytest.raises(ConfigError):
            trainer.TrainConfig(w_parser=-0.1)
