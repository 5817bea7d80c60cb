"""Joint end-to-end training: weighted multi-task loss, AdamW schedule with
plateau-halving and early stopping, and the loss-weight grid search.

Per-language loss-weight presets ship with the package; most languages use
parser/morph/CWI = 2.0/1.5/1.0, with heavier morphology and CWI weights for
the two that benefit from them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conllu import Sentence, build_feature_vocab
from .encoder import PROVIDER_HASHED
from .errors import ConfigError, MorphoparseError
from .model import (
    JointModel,
    ModelConfig,
    SentenceExample,
    corpus_cwi_weights,
    prepare_example,
)
from .nn import AdamW

log = logging.getLogger(__name__)

DEFAULT_LR_SCRATCH = 1e-3
DEFAULT_LR_EXTERNAL = 2e-5
PLATEAU_MIN_DELTA = 1e-4
MAX_LR_REDUCTIONS = 2

#: per-language loss-weight presets (parser, morph, cwi)
PRESETS: dict[str, tuple[float, float, float]] = {
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

#: distinct preset triples, in preset-table order; the default tuning grid
DEFAULT_GRID: list[tuple[float, float, float]] = [
    (2.0, 1.5, 1.0),
    (2.0, 1.5, 1.5),
    (2.0, 2.0, 1.5),
]


@dataclass
class TrainConfig:
    w_parser: float = 2.0
    w_morph: float = 1.5
    w_cwi: float = 1.0
    #: None resolves per provider: 1e-3 from scratch, 2e-5 with external vectors
    lr: float | None = None
    batch_size: int = 16
    max_epochs: int = 25
    patience: int = 1
    lr_factor: float = 0.5
    seed: int = 0
    word_dropout: float = 0.05
    weight_decay: float = 0.01
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        if min(self.w_parser, self.w_morph, self.w_cwi) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.w_parser == self.w_morph == self.w_cwi == 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if not 0 < self.lr_factor < 1:
            raise ConfigError("lr_factor must be in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.word_dropout < 1:
            raise ConfigError("word_dropout must be in [0, 1)")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_parser, self.w_morph, self.w_cwi)

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        if self.model.encoder.provider == PROVIDER_HASHED:
            return DEFAULT_LR_SCRATCH
        return DEFAULT_LR_EXTERNAL

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        return TrainConfig(**d)

    @staticmethod
    def from_json_file(path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return TrainConfig.from_dict(json.load(f))


def toy_overfit_config(seed: int = 0) -> TrainConfig:
    """A configuration that overfits the bundled toy corpus to near-perfect
    training scores on one CPU core in well under a minute."""
    from .encoder import EncoderConfig

    return TrainConfig(
        lr=2e-3,
        max_epochs=100,
        patience=5,
        seed=seed,
        model=ModelConfig(
            encoder=EncoderConfig(dim=48, hash_buckets=2048, window=2),
            shared_hidden=128,
            cwi_hidden=64,
            arc_mlp=48,
            rel_mlp=32,
        ),
    )


def preset_config(name: str, base: TrainConfig | None = None) -> TrainConfig:
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    w_parser, w_morph, w_cwi = PRESETS[key]
    base = base if base is not None else TrainConfig()
    return replace(base, w_parser=w_parser, w_morph=w_morph, w_cwi=w_cwi)


def joint_loss(l_parser: float, l_morph: float, l_cwi: float, config: TrainConfig) -> float:
    """Weighted sum of the three task losses."""
    total = config.w_parser * l_parser + config.w_morph * l_morph + config.w_cwi * l_cwi
    if not np.isfinite(total):
        raise MorphoparseError(
            f"non-finite joint loss from ({l_parser}, {l_morph}, {l_cwi})"
        )
    return total


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train: dict
    dev: dict | None
    dev_metrics: dict | None


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "stop_epoch": self.stop_epoch,
            "stop_reason": self.stop_reason,
        }


def _mean_losses(results: list[dict]) -> dict:
    out = {k: float(np.mean([r[k] for r in results])) for k in ("total", "morph", "cwi")}
    with_parser = [r["parser"] for r in results if r["has_parser"]]
    out["parser"] = float(np.mean(with_parser)) if with_parser else 0.0
    return out


def _eval_losses(model: JointModel, examples: list[SentenceExample],
                 weights: tuple[float, float, float]) -> dict:
    return _mean_losses([model.sentence_losses(ex, weights) for ex in examples])


def train(
    corpus_train: list[Sentence],
    corpus_dev: list[Sentence] | None,
    config: TrainConfig,
    compute_dev_metrics: bool = True,
) -> tuple[JointModel, TrainLog]:
    """Train a joint model; returns the parameters of the best epoch by
    monitored loss (dev loss, or train loss when no dev corpus is given)."""
    if not corpus_train:
        raise MorphoparseError("training corpus is empty")
    vocab = build_feature_vocab(corpus_train)
    model = JointModel(config.model, vocab, seed=config.seed,
                       cwi_weights=corpus_cwi_weights(corpus_train))

    examples = [prepare_example(s, vocab, i) for i, s in enumerate(corpus_train)]
    n_unusable = sum(
        1 for ex in examples if ex.gold_heads is not None and not ex.gold_projective
    )
    if n_unusable:
        log.warning(
            "%d/%d training sentences have non-projective gold trees; "
            "they contribute no parser loss",
            n_unusable,
            len(examples),
        )
    dev_examples = None
    if corpus_dev:
        dev_examples = [
            prepare_example(s, vocab, len(corpus_train) + i) for i, s in enumerate(corpus_dev)
        ]
    else:
        log.warning("no dev corpus; the schedule monitors training loss instead")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))
    optimizer = AdamW(
        model.params(), lr=config.resolved_lr(), weight_decay=config.weight_decay
    )

    track = TrainLog()
    best_monitor = np.inf
    best_params = [p.value.copy() for p in model.params()]
    bad_epochs = 0
    reductions_since_improvement = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(examples))
        epoch_results: list[dict] = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            for idx in batch:
                epoch_results.append(
                    model.sentence_losses(
                        examples[idx],
                        config.weights,
                        rng=rng,
                        use_dropout=True,
                        word_dropout_rate=config.word_dropout,
                        grad_scale=1.0 / len(batch),
                    )
                )
            optimizer.step()

        train_losses = _mean_losses(epoch_results)
        dev_losses = _eval_losses(model, dev_examples, config.weights) if dev_examples else None
        dev_metrics = None
        if corpus_dev and compute_dev_metrics:
            dev_metrics = _corpus_metrics(model, corpus_dev, sent_offset=len(corpus_train))

        track.epochs.append(
            EpochRecord(epoch, optimizer.lr, train_losses, dev_losses, dev_metrics)
        )

        monitor = (dev_losses or train_losses)["total"]
        if monitor < best_monitor - PLATEAU_MIN_DELTA:
            best_monitor = monitor
            best_params = [p.value.copy() for p in model.params()]
            track.best_epoch = epoch
            bad_epochs = 0
            reductions_since_improvement = 0
        else:
            bad_epochs += 1
            if bad_epochs >= max(config.patience, 1):
                optimizer.lr *= config.lr_factor
                reductions_since_improvement += 1
                bad_epochs = 0
                if reductions_since_improvement >= MAX_LR_REDUCTIONS:
                    track.stop_epoch = epoch
                    track.stop_reason = "lr_plateau"
                    break
    else:
        track.stop_epoch = config.max_epochs
        track.stop_reason = "max_epochs"

    for p, value in zip(model.params(), best_params):
        p.value[...] = value
    if track.best_epoch == 0:
        track.best_epoch = track.stop_epoch
    return model, track


def _corpus_metrics(model: JointModel, corpus: list[Sentence], sent_offset: int = 0) -> dict:
    from . import evaluation, pipeline  # late import; those modules import model

    predicted, _ = pipeline.predict(model, corpus, sent_offset=sent_offset)
    report = evaluation.evaluate_corpora(corpus, predicted)
    return {
        "mslas": report.mslas.f1,
        "las": report.las.f1,
        "feats": report.feats.f1,
    }


def grid_search_weights(
    corpus_train: list[Sentence],
    corpus_dev: list[Sentence],
    grid: list[tuple[float, float, float]] | None = None,
    base: TrainConfig | None = None,
) -> tuple[TrainConfig, list[dict]]:
    """Train one model per weight triple (same seed) and pick the dev-MSLAS
    argmax; ties resolve to the earliest triple in the grid."""
    if grid is not None and not grid:
        raise ConfigError("weight grid is empty")
    grid = grid if grid is not None else list(DEFAULT_GRID)
    if not corpus_dev:
        raise ConfigError("grid search needs a non-empty dev corpus")
    base = base if base is not None else TrainConfig()

    rows: list[dict] = []
    best_idx = 0
    for i, (w_parser, w_morph, w_cwi) in enumerate(grid):
        config = replace(base, w_parser=w_parser, w_morph=w_morph, w_cwi=w_cwi)
        model, _ = train(corpus_train, corpus_dev, config, compute_dev_metrics=False)
        metrics = _corpus_metrics(model, corpus_dev, sent_offset=len(corpus_train))
        rows.append({"weights": [w_parser, w_morph, w_cwi], **metrics})
        if metrics["mslas"] > rows[best_idx]["mslas"]:
            best_idx = i
    best = grid[best_idx]
    return replace(base, w_parser=best[0], w_morph=best[1], w_cwi=best[2]), rows
