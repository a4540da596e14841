"""Command-line entry points binding the full workflow together.

Commands follow the processing order: ingest -> prep -> cluster -> review
-> train/eval/bench/classify. Every flag can also come from a TOML config
file (--config); explicit flags win. The seed is printed in every output
header so runs can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import tomli

from . import __version__
from .classifiers import TrainConfig, load_model, save_model
from .corpus import (
    DEFAULT_MIN_CONFIDENCE,
    DatasetManifest,
    detect_all,
    filter_english,
    ingest,
    load_dataset,
    save_dataset,
)
from .evalkit import bench, cross_validate
from .pipeline import (
    CLASSIFIERS,
    VECTORIZERS,
    FittedPipeline,
    PipelineSpec,
    all_pipeline_specs,
    fit_pipeline,
)
from .review_service import ADDR_ENV_VAR, DEFAULT_ADDR, create_session, serve
from .textprep import (
    DEFAULT_MIN_WORDS,
    filter_min_words,
    load_stopwords,
    preprocess_all,
)
from .vectorspace import (
    DEFAULT_MAX_FEATURES,
    DEFAULT_MIN_DF,
    VectorizerConfig,
    Vocabulary,
    encode_corpus,
    fit_vocabulary,
)
from .wardcluster import save_dendrogram, ward_cluster

DEFAULT_SEED = 42
DEFAULT_REVIEW_K = 20


def _header(cmd: str, seed: int | None = None) -> str:
    parts = [f"# spamtax {__version__} {cmd}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    return " ".join(parts)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomli.load(fh)


def _apply_config(parser: argparse.ArgumentParser, config: dict, command: str) -> None:
    """Config supplies defaults; explicit flags still win."""
    merged = {k: v for k, v in config.items() if not isinstance(v, dict)}
    merged.update(config.get(command, {}))
    known = {a.dest for a in parser._actions}
    parser.set_defaults(**{k.replace("-", "_"): v for k, v in merged.items()
                           if k.replace("-", "_") in known})


def _vec_config(args, scheme: str) -> VectorizerConfig:
    return VectorizerConfig(max_features=args.max_features, min_df=args.min_df,
                            scheme=scheme)


def _train_config(args) -> TrainConfig:
    return TrainConfig(C=args.C, alpha=args.alpha, class_weight=args.class_weight,
                       max_iter=args.max_iter, tol=args.tol, seed=args.seed)


def _require_labels(docs) -> list[str]:
    labels = [d.label for d in docs]
    if any(lbl is None for lbl in labels):
        raise SystemExit("error: dataset has no labels (run the review/export step first)")
    return labels


def _load_tokenized(args, docs):
    stopword_set = load_stopwords(getattr(args, "stopwords", None))
    return stopword_set, preprocess_all(docs, stopword_set)


def cmd_ingest(args) -> int:
    result = ingest(args.paths, mime=args.mime)
    for err in result.errors:
        print(f"warning: {err.source}: {err.message}", file=sys.stderr)
    docs = detect_all(result.emails)
    save_dataset(docs, DatasetManifest.from_docs(docs), args.out)
    print(_header("ingest"))
    print(f"ingested {len(docs)} emails -> {args.out} "
          f"({len(result.errors)} errors)")
    return 0


def cmd_prep(args) -> int:
    docs, _ = load_dataset(args.dataset)
    english = filter_english(docs, args.min_confidence)
    stopword_set, token_docs = _load_tokenized(args, english)
    kept_ids = {t.id for t in filter_min_words(token_docs, args.min_words)}
    kept = [d for d in english if d.id in kept_ids]
    save_dataset(kept, DatasetManifest.from_docs(kept), args.out)
    print(_header("prep"))
    print(f"kept {len(kept)}/{len(docs)} documents "
          f"(english>={args.min_confidence}, min_words={args.min_words}) -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    docs, _ = load_dataset(args.dataset)
    _, token_docs = _load_tokenized(args, docs)
    vocab = fit_vocabulary(token_docs, _vec_config(args, "tfidf"))
    matrix = encode_corpus(token_docs, vocab, "tfidf")
    dendrogram = ward_cluster(matrix)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dendro_path = out_dir / "dendrogram.json"
    vocab_path = out_dir / "vocab.json"
    session_path = out_dir / "session.json"
    save_dendrogram(dendrogram, dendro_path)
    vocab.save(vocab_path)
    create_session(args.dataset, dendro_path, vocab_path,
                   out_dir / "labeled.jsonl", k=args.k, session_path=session_path,
                   stopwords=args.stopwords)
    print(_header("cluster"))
    print(f"clustered {len(docs)} documents; dendrogram -> {dendro_path}")
    print(f"review session (k={args.k}) -> {session_path}")
    return 0


def cmd_review(args) -> int:
    print(_header("review"))
    serve(args.session, addr=args.addr, ui_dir=args.ui)
    return 0


def cmd_train(args) -> int:
    docs, _ = load_dataset(args.dataset)
    labels = _require_labels(docs)
    _, token_docs = _load_tokenized(args, docs)
    spec = PipelineSpec(
        vectorizer=args.vectorizer,
        classifier=args.clf,
        vec_config=_vec_config(args, args.vectorizer),
        train_config=_train_config(args),
    )
    fitted = fit_pipeline(token_docs, labels, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(fitted.model, out, spec.train_config)
    vocab_out = args.vocab_out or str(out.with_name(out.stem + ".vocab.json"))
    fitted.vocab.save(vocab_out)
    print(_header("train", args.seed))
    print(f"trained {spec.name} on {len(docs)} documents")
    print(f"model -> {out}")
    print(f"vocabulary -> {vocab_out}")
    if not fitted.model.converged:
        print("warning: solver did not converge within max_iter", file=sys.stderr)
    return 0


def _eval_one(spec: PipelineSpec, token_docs, labels, documents, stopword_set, args):
    report = cross_validate(token_docs, labels, spec, k=args.cv, seed=args.seed)
    fitted = fit_pipeline(token_docs, labels, spec)
    report.ms_per_email = bench(fitted, documents, stopword_set,
                                repetitions=args.repetitions)
    return report


def cmd_eval(args) -> int:
    docs, _ = load_dataset(args.dataset)
    labels = _require_labels(docs)
    stopword_set, token_docs = _load_tokenized(args, docs)

    if args.all:
        specs = all_pipeline_specs(vec_config=_vec_config(args, "tfidf"),
                                   train_config=_train_config(args))
    else:
        specs = [PipelineSpec(
            vectorizer=args.vectorizer,
            classifier=args.clf,
            vec_config=_vec_config(args, args.vectorizer),
            train_config=_train_config(args),
        )]

    print(_header("eval", args.seed))
    rows = []
    for spec in specs:
        report = _eval_one(spec, token_docs, labels, docs, stopword_set, args)
        rows.append((spec, report))
        print(f"{spec.name}: micro_f1={report.micro[2]:.4f} "
              f"macro_f1={report.macro[2]:.4f} cv_acc={report.cv_accuracy_mean:.4f} "
              f"ms/email={report.ms_per_email:.3f}")

    if args.out:
        _write_eval_csv(args.out, rows, args.seed)
        print(f"csv -> {args.out}")
    if args.report:
        payload = {
            "seed": args.seed,
            "cv_folds": args.cv,
            "machine": {"cpu": platform.processor() or platform.machine(),
                        "python": platform.python_version()},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "pipelines": {spec.name: json.loads(report.to_json()) for spec, report in rows},
        }
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"report -> {args.report}")
    return 0


def _write_eval_csv(path: str, rows, seed: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"{_header('eval', seed)}\n")
        writer = csv.writer(fh)
        writer.writerow([
            "pipeline",
            "precision_micro", "precision_macro", "precision_weighted",
            "recall_micro", "recall_macro", "recall_weighted",
            "f1_micro", "f1_macro", "f1_weighted",
            "cv_accuracy", "cv_accuracy_std", "ms_per_email",
        ])
        for spec, report in rows:
            writer.writerow([
                spec.name,
                f"{report.micro[0]:.4f}", f"{report.macro[0]:.4f}", f"{report.weighted[0]:.4f}",
                f"{report.micro[1]:.4f}", f"{report.macro[1]:.4f}", f"{report.weighted[1]:.4f}",
                f"{report.micro[2]:.4f}", f"{report.macro[2]:.4f}", f"{report.weighted[2]:.4f}",
                f"{report.cv_accuracy_mean:.4f}", f"{report.cv_accuracy_std:.4f}",
                f"{report.ms_per_email:.3f}",
            ])


def cmd_bench(args) -> int:
    docs, _ = load_dataset(args.dataset)
    stopword_set, _ = _load_tokenized(args, docs)
    vocab = Vocabulary.load(args.vocab)
    model = load_model(args.model, vocab_hash=vocab.content_hash())
    spec = PipelineSpec(vectorizer=vocab.config.scheme, classifier=model.kind,
                        vec_config=vocab.config)
    fitted = FittedPipeline(spec=spec, vocab=vocab, model=model)
    ms = bench(fitted, docs, stopword_set, repetitions=args.repetitions)
    print(_header("bench", args.seed))
    print(f"{spec.name}: {ms:.3f} ms/email over {len(docs)} docs "
          f"x {args.repetitions} repetitions")
    return 0


def cmd_classify(args) -> int:
    stopword_set = load_stopwords(args.stopwords)
    vocab = Vocabulary.load(args.vocab)
    model = load_model(args.model, vocab_hash=vocab.content_hash())
    spec = PipelineSpec(vectorizer=vocab.config.scheme, classifier=model.kind,
                        vec_config=vocab.config)
    fitted = FittedPipeline(spec=spec, vocab=vocab, model=model)

    from .corpus import Document

    if args.paths:
        result = ingest(args.paths, mime=args.mime)
        for err in result.errors:
            print(f"warning: {err.source}: {err.message}", file=sys.stderr)
        docs = [Document(id=e.id, text=e.body_raw) for e in result.emails]
    else:
        docs = [Document(id="stdin", text=sys.stdin.read())]
    for doc in docs:
        category = fitted.classify_text(doc, stopword_set)
        print(f"{doc.id}\t{category}")
    return 0


def _add_common_vectorizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-features", type=int, default=DEFAULT_MAX_FEATURES)
    p.add_argument("--min-df", type=int, default=DEFAULT_MIN_DF)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--C", type=float, default=1000.0, dest="C")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--class-weight", choices=["balanced", "none"], default="balanced")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-4)


# flags a command cannot run without; they may come from the CLI or --config
_REQUIRED = {
    "ingest": ["paths", "out"],
    "prep": ["dataset", "out"],
    "cluster": ["dataset", "out_dir"],
    "review": ["session"],
    "train": ["dataset", "vectorizer", "clf", "out"],
    "eval": ["dataset"],
    "bench": ["model", "vocab", "dataset"],
    "classify": ["model", "vocab"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spamtax",
                                     description="Spam email multi-classification toolkit")
    parser.add_argument("--config", help="TOML file supplying flag defaults")
    parser.add_argument("--version", action="version", version=f"spamtax {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read raw emails and build a dataset")
    p.add_argument("paths", nargs="*", help="email files, directories, or one JSONL file")
    p.add_argument("--out")
    p.add_argument("--mime", action="store_true", help="parse inputs as MIME messages")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prep", help="filter to English and apply the min-word rule")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    p.add_argument("--min-words", type=int, default=DEFAULT_MIN_WORDS)
    p.add_argument("--stopwords", default=None)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("cluster", help="Ward-cluster a dataset and open a review session")
    p.add_argument("--dataset")
    p.add_argument("--out-dir")
    p.add_argument("--k", type=int, default=DEFAULT_REVIEW_K)
    p.add_argument("--stopwords", default=None)
    _add_common_vectorizer_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("review", help="serve the cluster review API/UI")
    p.add_argument("--session")
    p.add_argument("--addr", default=None,
                   help=f"host:port (default {DEFAULT_ADDR}, or ${ADDR_ENV_VAR})")
    p.add_argument("--ui", default=None, help="directory with the built UI bundle")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("train", help="train one vectorizer x classifier pipeline")
    p.add_argument("--dataset")
    p.add_argument("--vectorizer", choices=list(VECTORIZERS))
    p.add_argument("--clf", choices=list(CLASSIFIERS))
    p.add_argument("--out")
    p.add_argument("--vocab-out", default=None)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_common_vectorizer_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cross-validate pipelines and benchmark latency")
    p.add_argument("--dataset")
    p.add_argument("--all", action="store_true", help="evaluate all six pipelines")
    p.add_argument("--vectorizer", choices=list(VECTORIZERS))
    p.add_argument("--clf", choices=list(CLASSIFIERS))
    p.add_argument("--cv", type=int, default=5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--report", default=None, help="JSON report path")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--stopwords", default=None)
    _add_common_vectorizer_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure ms/email for a trained model")
    p.add_argument("--model")
    p.add_argument("--vocab")
    p.add_argument("--dataset")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--stopwords", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("classify", help="classify emails from stdin or files")
    p.add_argument("paths", nargs="*", help="email files (stdin if omitted)")
    p.add_argument("--model")
    p.add_argument("--vocab")
    p.add_argument("--mime", action="store_true")
    p.add_argument("--stopwords", default=None)
    p.set_defaults(func=cmd_classify)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    found, _ = probe.parse_known_args(argv)

    parser = build_parser()
    if found.config:
        config = _load_config(found.config)
        for action in parser._subparsers._group_actions:
            for name, subparser in action.choices.items():
                _apply_config(subparser, config, name)
    args = parser.parse_args(argv)

    missing = [dest for dest in _REQUIRED[args.command] if not getattr(args, dest, None)]
    if missing:
        parser.error(f"{args.command}: missing required arguments: "
                     + ", ".join("--" + d.replace("_", "-") for d in missing))
    if args.command == "eval" and not args.all and not (args.vectorizer and args.clf):
        parser.error("eval requires --all or both --vectorizer and --clf")
    if args.command == "classify" and not args.paths and sys.stdin.isatty():
        parser.error("classify: provide email files or pipe an email on stdin")
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
