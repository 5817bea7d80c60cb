import numpy as np
import pytest

from morphoparse import nn
from morphoparse.encoder import (
    EncoderConfig,
    ExternalEmbeddings,
    HashedEncoder,
    SharedLayer,
    contextualize,
    contextualize_backward,
    token_features,
)
from morphoparse.errors import AlignmentError, ConfigError, FormatError, MorphoparseError


@pytest.fixture()
def hashed(rng):
    return HashedEncoder(EncoderConfig(dim=8, hash_buckets=64, window=1), rng)


class TestHashedEncoder:
    def test_deterministic_across_calls(self, hashed):
        forms = ["From", "the", "AP"]
        a, _ = hashed.encode(forms)
        b, _ = hashed.encode(forms)
        assert np.array_equal(a, b)

    def test_single_token_shape(self, hashed):
        h, _ = hashed.encode(["story"])
        assert h.shape == (1, 8)

    def test_identical_forms_share_rows(self, hashed):
        h, _ = hashed.encode(["story", "comes", "story"])
        assert np.array_equal(h[0], h[2])
        assert not np.array_equal(h[0], h[1])

    def test_empty_form_rejected(self, hashed):
        with pytest.raises(MorphoparseError):
            hashed.encode([""])

    def test_empty_sentence_rejected(self, hashed):
        with pytest.raises(MorphoparseError):
            hashed.encode([])

    def test_feature_extraction_shape_flags(self):
        feats = token_features("AP")
        assert "shape=cap" in feats and "form=ap" in feats
        assert "shape=num" in token_features("42")
        assert "shape=punct" in token_features(":")
        assert "shape=cap" not in token_features("the")

    def test_gradients_accumulate_through_mean(self, rng):
        enc = HashedEncoder(EncoderConfig(dim=4, hash_buckets=13, window=0), rng)
        forms = ["aa", "bb"]
        c = rng.normal(size=(2, 4))

        def loss_fn():
            h, cache = enc.encode(forms)
            enc.backward(cache, c)
            return float((h * c).sum())

        assert nn.grad_check(loss_fn, enc.params()) <= 1e-6


class TestContextualize:
    def test_window_zero_identity(self, rng):
        h = rng.normal(size=(3, 4))
        assert contextualize(h, 0) is h

    def test_single_token_window_two_pads_with_zeros(self, rng):
        h = rng.normal(size=(1, 3))
        out = contextualize(h, 2)
        assert out.shape == (1, 15)
        assert np.allclose(out[0, :6], 0.0)
        assert np.allclose(out[0, 6:9], h[0])
        assert np.allclose(out[0, 9:], 0.0)

    def test_middle_row_concatenates_neighbors(self, rng):
        h = rng.normal(size=(3, 2))
        out = contextualize(h, 1)
        assert np.allclose(out[1], np.concatenate([h[0], h[1], h[2]]))
        assert np.allclose(out[0], np.concatenate([np.zeros(2), h[0], h[1]]))

    def test_backward_reverses_scatter(self, rng):
        h = rng.normal(size=(4, 3))
        p = nn.Param("h", h)
        c = rng.normal(size=(4, 9))

        def loss_fn():
            out = contextualize(p.value, 1)
            p.grad += contextualize_backward(c, 4, 3, 1)
            return float((out * c).sum())

        assert nn.grad_check(loss_fn, [p]) <= 1e-8


class TestSharedLayer:
    def test_zero_input_zero_output(self, rng):
        layer = SharedLayer("s", 6, 5, dropout_rate=0.1, rng=rng)
        out, _ = layer.forward(np.zeros((3, 6)), rng=None, training=False)
        assert np.allclose(out, 0.0)  # bias starts at zero, ReLU keeps it there

    def test_inference_has_no_dropout(self, rng):
        layer = SharedLayer("s", 4, 4, dropout_rate=0.9, rng=rng)
        x = rng.normal(size=(5, 4))
        a, _ = layer.forward(x, rng=None, training=False)
        b, _ = layer.forward(x, rng=None, training=False)
        assert np.array_equal(a, b)

    def test_gradients(self, rng):
        layer = SharedLayer("s", 5, 4, dropout_rate=0.3, rng=rng)
        x = rng.normal(size=(3, 5))
        c = rng.normal(size=(3, 4))

        def loss_fn():
            out, cache = layer.forward(x, rng=None, training=False)
            layer.backward(cache, c)
            return float((out * c).sum())

        assert nn.grad_check(loss_fn, layer.params()) <= 1e-6


class TestExternalEmbeddings:
    def write(self, tmp_path, text):
        path = tmp_path / "emb.txt"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_two_sentences_dim_eight(self, tmp_path):
        vec = " ".join(["0.5"] * 8)
        path = self.write(
            tmp_path,
            f"From\t{vec}\nthe\t{vec}\n\nStop\t{vec}\n",
        )
        provider = ExternalEmbeddings(path)
        assert provider.dim == 8
        h, _ = provider.encode(["From", "the"], sent_index=0)
        assert h.shape == (2, 8)
        h, _ = provider.encode(["Stop"], sent_index=1)
        assert h.shape == (1, 8)

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            ExternalEmbeddings(self.write(tmp_path, "\n\n"))

    def test_token_count_mismatch(self, tmp_path):
        path = self.write(tmp_path, "a\t1.0 2.0\nb\t3.0 4.0\n")
        provider = ExternalEmbeddings(path)
        with pytest.raises(AlignmentError):
            provider.encode(["a"], sent_index=0)

    def test_too_few_sentences(self, tmp_path):
        provider = ExternalEmbeddings(self.write(tmp_path, "a\t1.0\n"))
        with pytest.raises(AlignmentError):
            provider.encode(["x"], sent_index=1)

    def test_inconsistent_dims(self, tmp_path):
        with pytest.raises(FormatError):
            ExternalEmbeddings(self.write(tmp_path, "a\t1.0 2.0\nb\t3.0\n"))


class TestEncoderConfig:
    def test_window_bound(self):
        with pytest.raises(ConfigError):
            EncoderConfig(window=6)

    def test_provider_name_checked(self):
        with pytest.raises(ConfigError):
            EncoderConfig(provider="bert")

    def test_context_dim(self):
        assert EncoderConfig(dim=10, window=2).context_dim == 50
