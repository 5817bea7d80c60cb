"""Command-line entry point.

Subcommands: train, predict, evaluate, analyze, split, tune, inspect.
Exit codes: 0 success, 1 input/config errors, 2 gold/system mismatch during
evaluation.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import analysis, conllu, evaluation, pipeline, trainer
from .errors import AlignmentError, EvaluationError, MorphoparseError
from .model import load_checkpoint, save_checkpoint

log = logging.getLogger("morphoparse")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphoparse", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a joint model")
    p.add_argument("--train", required=True, help="training corpus (CoNLL-U)")
    p.add_argument("--dev", help="development corpus for the schedule and metrics")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--preset", help=f"language preset: {', '.join(sorted(trainer.PRESETS))}")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--max-epochs", type=int, help="override max epochs")
    p.add_argument("--batch-size", type=int, help="override batch size")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log-out", help="training log JSON path (default: OUT.log.json)")

    p = sub.add_parser("predict", help="annotate raw or forms-only input")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text", action="store_true",
                   help="input is plain text, one pre-tokenized sentence per line")
    p.add_argument("--embeddings", help="external embedding file for this input")
    p.add_argument("--empty-feats", choices=["|", "_"], default="|",
                   help="FEATS literal for content tokens with no predicted features")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("evaluate", help="score system output against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--json", dest="json_out", help="write the JSON report here ('-' = stdout)")

    p = sub.add_parser("analyze", help="error analysis of system output")
    p.add_argument("--gold", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--spatial-cases", help="file with one spatial Case value per line")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--feature-class", action="append", default=None,
                   help="feature class to tabulate (repeatable; default: all observed)")
    p.add_argument("--signed-distances", action="store_true")
    p.add_argument("--json", dest="json_out", help="write the JSON report here ('-' = stdout)")

    p = sub.add_parser("split", help="deterministic shuffle split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-dev", required=True)

    p = sub.add_parser("tune", help="grid search over loss weights")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--grid", help="JSON file with a list of [parser, morph, cwi] triples")
    p.add_argument("--config", help="base TrainConfig JSON file")
    p.add_argument("--out", help="write the winning TrainConfig JSON here")

    p = sub.add_parser("inspect", help="summarize a checkpoint or a corpus")
    p.add_argument("--model")
    p.add_argument("--input")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {
        "train": cmd_train,
        "predict": cmd_predict,
        "evaluate": cmd_evaluate,
        "analyze": cmd_analyze,
        "split": cmd_split,
        "tune": cmd_tune,
        "inspect": cmd_inspect,
    }[args.command]
    try:
        return handler(args)
    except (EvaluationError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MorphoparseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _load_train_config(args) -> trainer.TrainConfig:
    config = (
        trainer.TrainConfig.from_json_file(args.config) if args.config else trainer.TrainConfig()
    )
    if args.preset:
        config = trainer.preset_config(args.preset, base=config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_epochs is not None:
        overrides["max_epochs"] = args.max_epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["lr"] = args.lr
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    return config


def cmd_train(args) -> int:
    config = _load_train_config(args)
    corpus_train = conllu.read_conllu(args.train)
    corpus_dev = conllu.read_conllu(args.dev) if args.dev else None
    model, track = trainer.train(corpus_train, corpus_dev, config)
    save_checkpoint(args.out, model, extra={"train_config": config.to_dict()})
    log_path = args.log_out or f"{args.out}.log.json"
    with open(log_path, "w", encoding="utf-8") as f:
        json.dump(track.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    last = track.epochs[-1]
    print(
        f"trained {last.epoch} epochs (best {track.best_epoch}, {track.stop_reason}); "
        f"checkpoint: {args.out}"
    )
    if last.dev_metrics:
        m = track.epochs[track.best_epoch - 1].dev_metrics
        if m:
            print(f"dev MSLAS {m['mslas']:.1f}  LAS {m['las']:.1f}  Feats {m['feats']:.1f}")
    return 0


def _read_input_sentences(path: str, as_text: bool) -> list[conllu.Sentence]:
    if not as_text:
        return conllu.read_conllu(path)
    sentences = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            forms = line.split()
            if not forms:
                continue
            tokens = [conllu.Token.function(j + 1, form) for j, form in enumerate(forms)]
            sentences.append(
                conllu.Sentence(sent_id=f"text{i}", text=line.strip(), tokens=tokens)
            )
    return sentences


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model, external_path=args.embeddings)
    sentences = _read_input_sentences(args.input, args.text)
    config = pipeline.PipelineConfig(empty_feats_literal=args.empty_feats)
    annotated, stats = pipeline.predict(model, sentences, config, threads=args.threads)
    conllu.write_conllu(args.out, annotated)
    print(
        f"predicted {len(annotated)} sentences: {stats.n_relabeled} tokens relabeled "
        f"by the confidence rule, {stats.n_fallback} all-function fallbacks",
        file=sys.stderr,
    )
    return 0


def cmd_evaluate(args) -> int:
    result = evaluation.report(args.gold, args.system)
    print(result.table())
    if args.json_out:
        payload = json.dumps(result.as_dict(), indent=2, sort_keys=True)
        if args.json_out == "-":
            print(payload)
        else:
            with open(args.json_out, "w", encoding="utf-8") as f:
                f.write(payload + "\n")
    return 0


def cmd_analyze(args) -> int:
    gold = conllu.read_conllu(args.gold)
    system = conllu.read_conllu(args.system)
    payload: dict = {}

    classes = args.feature_class
    if classes is None:
        classes = sorted({a.cls for s in gold for t in s.tokens for a in t.feats})
    payload["feature_confusions"] = {}
    for cls in classes:
        table = analysis.feature_confusions(gold, system, cls)
        errors = table.errors(args.top_k)
        payload["feature_confusions"][cls] = {
            "errors": [[c, g, p] for c, g, p in errors],
            "matrix": table.to_dict(),
        }
        print(f"== {cls} confusions (top {args.top_k} errors)")
        if errors:
            for count, g, p in errors:
                print(f"{count:>6}  {g}  ->  {p}")
        else:
            print("  none")
        print()

    tables = analysis.deprel_confusion_tables(gold, system)
    merged = tables.merged(args.top_k)
    payload["deprel_confusions"] = {
        "merged": [[c, g, p] for c, g, p in merged],
        "label_errors": tables.label_errors.to_dict(),
        "cwi_errors": tables.cwi_errors.to_dict(),
    }
    print(f"== deprel errors (top {args.top_k}, `_` = content/function mismatch)")
    if merged:
        for count, g, p in merged:
            print(f"{count:>6}  {g}  ->  {p}")
    else:
        print("  none")
    print()

    hist = analysis.attachment_distance_histogram(gold, system, signed=args.signed_distances)
    payload["attachment_distance"] = hist.to_dict()
    print(f"== attachment distances of {hist.n_errors} head errors")
    print(hist.to_text())
    print()

    direction = analysis.direction_confusion(gold, system)
    payload["direction"] = direction.to_dict()
    print("== attachment direction of head errors (rows gold, columns predicted)")
    print(direction.to_text())
    print()

    if args.spatial_cases:
        values = analysis.load_spatial_values(args.spatial_cases)
        score = analysis.spatial_case_metrics(gold, system, values)
        payload["spatial_case"] = score.as_dict()
        print(
            f"== spatial case ({len(values)} values): "
            f"P {score.precision:.1f}  R {score.recall:.1f}  F1 {score.f1:.1f}"
        )

    if args.json_out:
        text = json.dumps(payload, indent=2, sort_keys=True)
        if args.json_out == "-":
            print(text)
        else:
            with open(args.json_out, "w", encoding="utf-8") as f:
                f.write(text + "\n")
    return 0


def cmd_split(args) -> int:
    corpus = conllu.read_conllu(args.input)
    first, second = conllu.split_corpus(corpus, args.ratio, args.seed)
    conllu.write_conllu(args.out_train, first)
    conllu.write_conllu(args.out_dev, second)
    print(f"split {len(corpus)} sentences into {len(first)} + {len(second)}")
    return 0


def cmd_tune(args) -> int:
    base = trainer.TrainConfig.from_json_file(args.config) if args.config else None
    grid = None
    if args.grid:
        with open(args.grid, encoding="utf-8") as f:
            grid = [tuple(row) for row in json.load(f)]
    corpus_train = conllu.read_conllu(args.train)
    corpus_dev = conllu.read_conllu(args.dev)
    best, rows = trainer.grid_search_weights(corpus_train, corpus_dev, grid, base)
    print(f"{'parser':>8}{'morph':>8}{'cwi':>8}{'MSLAS':>8}{'LAS':>8}{'Feats':>8}")
    for row in sorted(rows, key=lambda r: -r["mslas"]):
        w = row["weights"]
        print(
            f"{w[0]:>8.2f}{w[1]:>8.2f}{w[2]:>8.2f}"
            f"{row['mslas']:>8.1f}{row['las']:>8.1f}{row['feats']:>8.1f}"
        )
    print(f"best weights: {best.w_parser}/{best.w_morph}/{best.w_cwi}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(best.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def cmd_inspect(args) -> int:
    if not args.model and not args.input:
        print("error: inspect needs --model and/or --input", file=sys.stderr)
        return 1
    if args.model:
        model = load_checkpoint(args.model)
        n_params = sum(p.size for p in model.params())
        print(f"checkpoint: {args.model}")
        print(f"  parameters: {n_params} across {len(model.params())} tensors")
        print(f"  encoder: {model.config.encoder.provider} dim={model.provider.dim} "
              f"window={model.config.encoder.window}")
        print(f"  shared width: {model.config.shared_hidden}")
        print(f"  vocabulary: {model.vocab.n_features} atomic features, "
              f"{model.vocab.n_deprels} deprels")
        print(f"  cwi class weights: {model.cwi_weights.round(4).tolist()}")
    if args.input:
        corpus = conllu.read_conllu(args.input)
        n_tokens = sum(len(s) for s in corpus)
        n_content = sum(len(s.content_tokens()) for s in corpus)
        atoms = {a for s in corpus for t in s.tokens for a in t.feats}
        deprels = {t.deprel for s in corpus for t in s.content_tokens() if t.deprel}
        print(f"corpus: {args.input}")
        print(f"  sentences: {len(corpus)}")
        share = 100.0 * n_content / n_tokens if n_tokens else 0.0
        print(f"  tokens: {n_tokens} ({n_content} content, {share:.1f}%)")
        print(f"  atomic features: {len(atoms)}; deprels: {len(deprels)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
