"""Command-line entry point.

Subcommands mirror the pipeline stages: ``dict`` (stats/downsample),
``synth``, ``link``, ``train``, ``index`` (build/subsample), ``predict``,
``eval``.  Data flows through JSON-Lines on stdin/stdout or explicit
paths; logs go to stderr; every random choice is driven by an explicit
seed recorded into the produced manifests, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import tomli

from . import __version__
from .dictionary import (
    dictionary_stats,
    downsample_synonyms,
    load_dictionary,
    save_dictionary,
)
from .encoder import init_params, load_params, mention_input_from_span, save_params
from .errors import CorpusError, CtxnormError
from .evaluation import (
    GoldMention,
    confusion_counts,
    evaluate_accuracy,
    read_gold,
    tfidf_fit,
    tfidf_predict,
)
from .linker import (
    LinkMode,
    SynonymMatcher,
    link_corpus,
    read_linked_sentences,
    read_raw_sentences,
    write_linked_sentences,
)
from .losses import MSLossParams
from .neighbors import (
    build_index,
    predict_concept,
    read_index,
    subsample_index,
    verify_fingerprint,
    write_index,
)
from .synth import SynthSpec, generate, write_synth
from .training import TrainConfig, build_pool, train

logger = logging.getLogger("ctxnorm")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="intra-stage parallelism (the reference implementation runs "
        "single-threaded; values > 1 are accepted and currently ignored)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxnorm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ctxnorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dict = sub.add_parser("dict", help="dictionary utilities")
    dict_sub = p_dict.add_subparsers(dest="dict_command", required=True)
    p_stats = dict_sub.add_parser("stats", help="concept/synonym counts")
    p_stats.add_argument("--dict", required=True, dest="dict_path")
    p_stats.add_argument("--json", action="store_true")
    _add_common(p_stats)
    p_down = dict_sub.add_parser("downsample", help="keep a fraction of synonyms per concept")
    p_down.add_argument("--dict", required=True, dest="dict_path")
    p_down.add_argument("--fraction", required=True, type=float)
    p_down.add_argument("--seed", required=True, type=int)
    p_down.add_argument("--out", required=True)
    _add_common(p_down)

    p_synth = sub.add_parser("synth", help="generate a synthetic dictionary + corpus")
    p_synth.add_argument("--spec", required=True, help="TOML file with synthesis settings")
    p_synth.add_argument("--out", required=True, help="output directory")
    _add_common(p_synth)

    p_link = sub.add_parser("link", help="dictionary-match raw sentences")
    p_link.add_argument("--dict", required=True, dest="dict_path")
    p_link.add_argument("--mode", choices=["all", "one"], default="all")
    p_link.add_argument("--exclude-docs", help="file with one doc_id per line to drop")
    p_link.add_argument("--in", dest="in_path", help="raw JSONL (default: stdin)")
    p_link.add_argument("--out", dest="out_path", help="linked JSONL (default: stdout)")
    _add_common(p_link)

    p_train = sub.add_parser("train", help="train the encoder on a linked corpus")
    p_train.add_argument("--linked", required=True)
    p_train.add_argument("--dict", required=True, dest="dict_path")
    p_train.add_argument("--config", required=True, help="TOML training configuration")
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--curve", help="CSV loss curve path (default: <out>.curve.csv)")
    _add_common(p_train)

    p_index = sub.add_parser("index", help="neighbor-index utilities")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)
    p_build = index_sub.add_parser("build", help="embed every linked mention")
    p_build.add_argument("--linked", required=True)
    p_build.add_argument("--model", required=True)
    p_build.add_argument("--out", required=True)
    _add_common(p_build)
    p_sub = index_sub.add_parser("subsample", help="cap records per synonym surface")
    p_sub.add_argument("--index", required=True, dest="index_path")
    p_sub.add_argument("--cap", required=True, type=int)
    p_sub.add_argument("--seed", required=True, type=int)
    p_sub.add_argument("--out", required=True)
    _add_common(p_sub)

    p_pred = sub.add_parser("predict", help="normalize mentions by context matching")
    p_pred.add_argument("--index", required=True, dest="index_path")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--k", type=int, default=15)
    p_pred.add_argument("--in", dest="in_path", help="mention JSONL (default: stdin)")
    p_pred.add_argument("--out", dest="out_path", help="predictions JSONL (default: stdout)")
    _add_common(p_pred)

    p_eval = sub.add_parser("eval", help="accuracy against gold mentions")
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--index", dest="index_path")
    p_eval.add_argument("--model", dest="model_path")
    p_eval.add_argument("--k", type=int, default=15)
    p_eval.add_argument("--baseline", choices=["tfidf"], help="evaluate a baseline instead")
    p_eval.add_argument("--dict", dest="dict_path", help="dictionary (required for --baseline)")
    p_eval.add_argument("--confusion", help="write per-concept confusion counts CSV here")
    p_eval.add_argument("--json", action="store_true")
    _add_common(p_eval)

    return parser


def _check_threads(args: argparse.Namespace) -> None:
    threads = getattr(args, "threads", 1)
    if threads < 1:
        raise CtxnormError("--threads must be >= 1")
    if threads > 1:
        logger.info("running single-threaded; --threads=%d recorded but unused", threads)


def _open_in(path: str | None):
    return open(path, "r", encoding="utf-8") if path else nullcontext(sys.stdin)


def _open_out(path: str | None):
    return open(path, "w", encoding="utf-8") if path else nullcontext(sys.stdout)


def _load_toml(path: str) -> dict:
    with open(path, "rb") as handle:
        return tomli.load(handle)


def _cmd_dict(args: argparse.Namespace) -> int:
    dictionary = load_dictionary(args.dict_path)
    if args.dict_command == "stats":
        stats = dictionary_stats(dictionary)
        if args.json:
            print(json.dumps(stats, sort_keys=True))
        else:
            print(f"concepts: {stats['concepts']}")
            print(f"synonyms: {stats['synonyms']}")
            print(f"mean synonyms/concept: {stats['mean_synonyms_per_concept']:.2f}")
        return 0
    sampled = downsample_synonyms(dictionary, args.fraction, args.seed)
    save_dictionary(sampled, args.out)
    manifest = {"input": args.dict_path, "fraction": args.fraction, "seed": args.seed,
                "concepts": sampled.concept_count, "synonyms": sampled.synonym_count}
    Path(args.out + ".manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    logger.info("kept %d synonyms across %d concepts", sampled.synonym_count, sampled.concept_count)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    raw = _load_toml(args.spec)
    section = raw.get("synth", raw)
    spec = SynthSpec(**section)
    data = generate(spec)
    paths = write_synth(data, args.out)
    logger.info(
        "wrote %d concepts, %d train sentences, %d gold mentions to %s",
        spec.n_concepts, len(data.sentences), len(data.gold), args.out,
    )
    print(json.dumps({name: str(path) for name, path in paths.items()}, sort_keys=True))
    return 0


def _cmd_link(args: argparse.Namespace) -> int:
    dictionary = load_dictionary(args.dict_path)
    matcher = SynonymMatcher(dictionary)
    exclude: frozenset[str] = frozenset()
    if args.exclude_docs:
        with open(args.exclude_docs, "r", encoding="utf-8") as handle:
            exclude = frozenset(line.strip() for line in handle if line.strip())
    mode = LinkMode(args.mode)
    with _open_in(args.in_path) as src, _open_out(args.out_path) as dst:
        linked = link_corpus(matcher, read_raw_sentences(src, args.in_path or "<stdin>"), mode, exclude)
        count = write_linked_sentences(dst, linked)
    logger.info("emitted %d linked sentences", count)
    return 0


def _train_config_from_toml(raw: dict) -> tuple[TrainConfig, dict]:
    loss_section = raw.get("loss", {})
    train_section = raw.get("train", {})
    encoder_section = raw.get("encoder", {})
    loss_params = MSLossParams(
        alpha=float(loss_section.get("alpha", 2.0)),
        beta=float(loss_section.get("beta", 50.0)),
        base=float(loss_section.get("base", 1.0)),
        margin=float(loss_section.get("margin", 0.1)),
    )
    config = TrainConfig(
        concepts_per_batch=int(train_section.get("concepts_per_batch", 16)),
        sentences_per_concept=int(train_section.get("sentences_per_concept", 2)),
        learning_rate=float(train_section.get("learning_rate", 1e-2)),
        steps=int(train_section.get("steps", 100)),
        seed=int(train_section.get("seed", 0)),
        loss_params=loss_params,
    )
    return config, encoder_section


def _cmd_train(args: argparse.Namespace) -> int:
    dictionary = load_dictionary(args.dict_path)
    config, encoder_section = _train_config_from_toml(_load_toml(args.config))
    with open(args.linked, "r", encoding="utf-8") as handle:
        linked = list(read_linked_sentences(handle, args.linked))
    known = [
        sent for sent in linked if all(m.concept in dictionary for m in sent.mentions)
    ]
    if len(known) != len(linked):
        logger.warning("dropped %d sentences with concepts outside the dictionary",
                       len(linked) - len(known))
    pool = build_pool(known, min_sentences=config.sentences_per_concept)
    if pool.dropped_concepts:
        logger.info("dropped %d concepts below %d distinct sentences",
                    pool.dropped_concepts, config.sentences_per_concept)
    params = init_params(
        feature_space=int(encoder_section.get("feature_space", 2**18)),
        dim=int(encoder_section.get("dim", 256)),
        window=int(encoder_section.get("window", 10)),
        seed=int(encoder_section.get("init_seed", 0)),
        hash_seed=int(encoder_section.get("hash_seed", 0)),
    )
    trained, curve = train(pool, params, config)
    save_params(trained, args.out)
    curve_path = args.curve or args.out + ".curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(curve):
            writer.writerow([step, f"{loss:.10g}"])
    manifest = {
        "linked": args.linked,
        "dictionary": args.dict_path,
        "steps": config.steps,
        "seed": config.seed,
        "encoder": {
            "feature_space": params.feature_space,
            "dim": params.dim,
            "window": params.window,
            "hash_seed": params.hash_seed,
            "init_seed": int(encoder_section.get("init_seed", 0)),
        },
        "final_loss": curve[-1] if curve else None,
        "pool_concepts": len(pool),
    }
    Path(args.out + ".manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    logger.info("trained %d steps; final loss %s", config.steps, curve[-1] if curve else "n/a")
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    if args.index_command == "build":
        params = load_params(args.model)
        with open(args.linked, "r", encoding="utf-8") as handle:
            linked = list(read_linked_sentences(handle, args.linked))
        index = build_index(params, linked)
        with open(args.out, "w", encoding="utf-8") as handle:
            write_index(handle, index)
        logger.info("indexed %d mentions", len(index))
        return 0
    with open(args.index_path, "r", encoding="utf-8") as handle:
        index = read_index(handle, args.index_path)
    sampled = subsample_index(index, args.cap, args.seed)
    with open(args.out, "w", encoding="utf-8") as handle:
        write_index(handle, sampled)
    manifest = {"input": args.index_path, "cap": args.cap, "seed": args.seed,
                "records": len(sampled)}
    Path(args.out + ".manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    logger.info("kept %d of %d records", len(sampled), len(index))
    return 0


def _read_queries(handle, source: str):
    """Gold-format records whose gold_concept is optional."""
    for line_no, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            for mention in record["mentions"]:
                yield (
                    str(record["doc_id"]),
                    int(record["sent_id"]),
                    str(record["text"]),
                    int(mention["start"]),
                    int(mention["end"]),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{source}:{line_no}: bad mention record: {exc}") from exc


def _cmd_predict(args: argparse.Namespace) -> int:
    params = load_params(args.model)
    with open(args.index_path, "r", encoding="utf-8") as handle:
        index = read_index(handle, args.index_path)
    verify_fingerprint(index, params)
    count = 0
    with _open_in(args.in_path) as src, _open_out(args.out_path) as dst:
        for doc_id, sent_id, text, start, end in _read_queries(src, args.in_path or "<stdin>"):
            mention = mention_input_from_span(text, start, end)
            prediction = predict_concept(index, params, mention, k=args.k, check_fingerprint=False)
            dst.write(json.dumps({
                "doc_id": doc_id,
                "sent_id": sent_id,
                "start": start,
                "end": end,
                "surface": text[start:end],
                "predicted_concept": prediction.concept,
                "votes": dict(sorted(prediction.votes.items())),
            }, ensure_ascii=False) + "\n")
            count += 1
    logger.info("predicted %d mentions with k=%d", count, args.k)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    with open(args.gold, "r", encoding="utf-8") as handle:
        gold: list[GoldMention] = list(read_gold(handle, args.gold))
    if args.baseline == "tfidf":
        if not args.dict_path:
            raise CtxnormError("--baseline tfidf requires --dict")
        model = tfidf_fit(load_dictionary(args.dict_path))
        predictions = [tfidf_predict(model, g.surface) for g in gold]
    else:
        if not (args.index_path and args.model_path):
            raise CtxnormError("eval requires --index and --model (or --baseline tfidf --dict)")
        params = load_params(args.model_path)
        with open(args.index_path, "r", encoding="utf-8") as handle:
            index = read_index(handle, args.index_path)
        verify_fingerprint(index, params)
        predictions = [
            predict_concept(
                index, params, mention_input_from_span(g.text, g.start, g.end),
                k=args.k, check_fingerprint=False,
            ).concept
            for g in gold
        ]
    accuracy = evaluate_accuracy(predictions, gold)
    if args.confusion:
        counts = confusion_counts(predictions, gold)
        with open(args.confusion, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["gold_concept", "predicted_concept", "count"])
            for (gold_c, pred_c), n in sorted(counts.items()):
                writer.writerow([gold_c, pred_c, n])
    if args.json:
        print(json.dumps({"accuracy": accuracy, "mentions": len(gold)}, sort_keys=True))
    else:
        print(f"accuracy: {accuracy:.4f} ({len(gold)} mentions)")
    return 0


_HANDLERS = {
    "dict": _cmd_dict,
    "synth": _cmd_synth,
    "link": _cmd_link,
    "train": _cmd_train,
    "index": _cmd_index,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_threads(args)
        return _HANDLERS[args.command](args)
    except CtxnormError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
