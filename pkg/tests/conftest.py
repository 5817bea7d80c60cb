import numpy as np
import pytest

from morphoparse import bundled, conllu
from morphoparse.encoder import EncoderConfig
from morphoparse.model import JointModel, ModelConfig, corpus_cwi_weights

# The running example sentence used throughout the tests: four content words
# (AP, comes, this, story) and three function words (From, the, colon).
TABLE1 = """\
# sent_id = example-1
# text = From the AP comes this story :
1\tFrom\t_\t_\t_\t_\t_\t_\t_\t_
2\tthe\t_\t_\t_\t_\t_\t_\t_\t_
3\tAP\t_\t_\t_\tCase=Abl|Definite=Def|Number=Sing\t4\tobl\t_\t_
4\tcomes\t_\t_\t_\tMood=Ind|Polarity=Pos|Tense=Pres|VerbForm=Fin|Voice=Act\t0\troot\t_\t_
5\tthis\t_\t_\t_\tNumber=Sing|PronType=Dem\t6\tdet\t_\t_
6\tstory\t_\t_\t_\tNumber=Sing\t4\tnsubj\t_\t_
7\t:\t_\t_\t_\t_\t_\t_\t_\t_
"""


@pytest.fixture(scope="session")
def table1_text() -> str:
    return TABLE1


@pytest.fixture(scope="session")
def table1_corpus():
    return conllu.parse_conllu(TABLE1)


@pytest.fixture(scope="session")
def table1_sentence(table1_corpus):
    return table1_corpus[0]


@pytest.fixture(scope="session")
def toy_corpus():
    return conllu.read_conllu(bundled.toy_corpus_path())


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        encoder=EncoderConfig(dim=6, hash_buckets=31, window=1),
        shared_hidden=10,
        cwi_hidden=7,
        arc_mlp=6,
        rel_mlp=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(corpus, seed=0, **overrides) -> JointModel:
    vocab = conllu.build_feature_vocab(corpus)
    return JointModel(
        tiny_model_config(**overrides), vocab, seed=seed,
        cwi_weights=corpus_cwi_weights(corpus),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
