"""Command-line entry point.

Subcommands: ``synth``, ``index``, ``search``, ``embed-train``, ``train``,
``rerank``, ``eval`` and ``export``. A ``--config`` file of ``key = value``
lines supplies flag values; flags given on the command line win.

Exit codes: 0 success, 1 usage error, 2 data error (including missing
files), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import time
from pathlib import Path
from typing import Sequence

import torch

from .corpus import (
    DataError,
    Facet,
    build_training_examples,
    load_corpus,
    load_mesh_names,
    load_qrels,
    load_run,
    load_topics,
    run_tag,
    write_corpus,
    write_mesh_names,
    write_qrels,
    write_run,
    write_topics,
)

logger = logging.getLogger("facetrank")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

INDEX_FILE = "index.bin"
CORPUS_FILE = "corpus.jsonl"

# Encoder/decoder shapes and optimisation settings per profile. ``paper``
# mirrors the published setup; ``desk`` is small enough for a laptop CPU.
PROFILES = {
    "paper": {
        "layers": 12, "model_dim": 768, "heads": 12, "ffn_dim": 3072, "max_len": 384,
        "vocab_size": 30522, "steps": 30000, "lr": 1e-5,
        "dec_layers": 6, "dec_ffn_dim": 2048, "encoder_lr": 1e-5, "decoder_lr": 1e-3,
    },
    "desk": {
        "layers": 2, "model_dim": 64, "heads": 4, "ffn_dim": 128, "max_len": 128,
        "vocab_size": 4000, "steps": 1000, "lr": 1e-3,
        "dec_layers": 2, "dec_ffn_dim": 128, "encoder_lr": 1e-4, "decoder_lr": 1e-3,
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


# ------------------------------------------------------------------ parsing


def _topic_ids(text: str) -> list[str]:
    """``"1-16,20"`` -> ``["1", ..., "16", "20"]``."""
    out: list[str] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("-")
        if sep and lo.isdigit() and hi.isdigit():
            out += [str(i) for i in range(int(lo), int(hi) + 1)]
        else:
            out.append(part)
    return out


def _facet(text: str) -> Facet:
    try:
        return Facet[text.upper().replace("-", "_")]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown facet {text!r}; choose from {', '.join(f.name.lower() for f in Facet)}"
        ) from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value file; command-line flags win")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _model_flags(p: argparse.ArgumentParser, kind: str) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--profile", choices=sorted(PROFILES), default="paper",
                   help="size preset; desk gives 2 layers of width 64")
    g.add_argument("--layers", type=int, help="encoder layers (paper 12; desk 2)")
    g.add_argument("--model-dim", type=int, help="hidden width (paper 768; desk 64)")
    g.add_argument("--heads", type=int, help="attention heads (paper 12; desk 4)")
    g.add_argument("--ffn-dim", type=int, help="feed-forward width (paper 3072; desk 128)")
    g.add_argument("--max-len", type=int, help="max source tokens (paper 384; desk 128)")
    g.add_argument("--vocab-size", type=int, help="wordpiece vocabulary size (paper 30522; desk 4000)")
    g.add_argument("--dropout", type=float, default=0.0)
    t = p.add_argument_group("training")
    t.add_argument("--steps", type=int, help="optimizer steps (paper 30000; desk 1000)")
    t.add_argument("--batch-size", type=int, default=12)
    t.add_argument("--beta1", type=float, default=0.9)
    t.add_argument("--beta2", type=float, default=0.999)
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--patience", type=int, default=2, help="plateau evaluations before lr decay")
    t.add_argument("--factor", type=float, default=0.1, help="lr decay factor on plateau")
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint for --steps more steps")
    if kind in ("rel", "ext"):
        t.add_argument("--lr", type=float, help="Adam lr (paper 1e-5; desk 1e-3)")
        t.add_argument("--w0", type=float, default=0.15 if kind == "rel" else 0.075,
                       help="negative-class loss weight")
        t.add_argument("--w1", type=float, default=1.0, help="positive-class loss weight")
        t.add_argument("--threshold", type=float, default=0.5)
    else:
        t.add_argument("--dec-layers", type=int, help="decoder layers (paper 6; desk 2)")
        t.add_argument("--dec-ffn-dim", type=int, help="decoder feed-forward width (paper 2048; desk 128)")
        t.add_argument("--encoder-lr", type=float, help="encoder lr (paper 1e-5; desk 1e-4)")
        t.add_argument("--decoder-lr", type=float, help="decoder lr (paper 1e-3)")
        t.add_argument("--max-target-len", type=int, default=50)
        t.add_argument("--beam", type=int, default=4)
        t.add_argument("--alpha", type=float, default=0.4, help="length penalty exponent")
        t.add_argument("--beta", type=float, default=0.4, help="coverage penalty weight")
        t.add_argument("--freeze-embeddings", action="store_true",
                       help="keep target embeddings at their pretrained values")
        t.add_argument("--ext", metavar="CKPT", help="keyword extractor checkpoint (required)")
        t.add_argument("--embeddings", metavar="VECTORS", help="word+entity vectors for the target side")


def _data_flags(p: argparse.ArgumentParser, qrels=True) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--corpus", required=True, help="corpus JSONL")
    g.add_argument("--topics", required=True, help="topics JSONL")
    if qrels:
        g.add_argument("--qrels", required=True, help="TREC qrels")
    g.add_argument("--topic-ids", type=_topic_ids, help="restrict to these topics, e.g. 1-16,18")
    g.add_argument("--mesh-names", help="MeSH code to name table (defaults to the bundled one)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="facetrank", description="Faceted retrieval with neural reranking.",
                     formatter_class=_Formatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic corpus, topics and qrels", formatter_class=_Formatter)
    _common(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--docs", type=int, default=2000)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("index", help="build a BM25 index", formatter_class=_Formatter)
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="index directory")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--fields", default="title,abstract", help="comma-separated fields")

    p = sub.add_parser("search", help="first-stage BM25 retrieval", formatter_class=_Formatter)
    _common(p)
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--topics", required=True)
    p.add_argument("--topic-ids", type=_topic_ids)
    p.add_argument("--k", type=int, default=500, help="documents per topic")
    p.add_argument("--mlt", action="store_true", help="expand queries with more-like-this terms")
    p.add_argument("--out", required=True, help="run file")
    p.add_argument("--tag", default="bm25")

    def embed_flags(p):
        _common(p)
        p.add_argument("--corpus", required=True)
        p.add_argument("--mesh-names")
        p.add_argument("--out", required=True, help="vector file (text format)")
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--window", type=int, default=5)
        p.add_argument("--negatives", type=int, default=5)
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--lr", type=float, default=0.05)
        p.add_argument("--min-count", type=int, default=1)
        p.add_argument("--batch-size", type=int, default=256)
        p.add_argument("--seed", type=int, default=0)

    embed_flags(sub.add_parser("embed-train", help="train word+entity embeddings", formatter_class=_Formatter))

    p = sub.add_parser("train", help="train a model", formatter_class=_Formatter)
    kinds = p.add_subparsers(dest="kind", metavar="KIND", parser_class=_Parser)
    kinds.required = True
    for kind, text in (("rel", "relevance classifier"), ("ext", "keyword extractor"),
                       ("abs", "pseudo-query generator")):
        k = kinds.add_parser(kind, help=text, formatter_class=_Formatter)
        _common(k)
        _data_flags(k)
        _model_flags(k, kind)
        k.add_argument("--out", required=True, help="checkpoint path")
        k.add_argument("--log", help="CSV training log (default: next to the checkpoint)")
    embed_flags(kinds.add_parser("embed", help="word+entity embeddings", formatter_class=_Formatter))

    p = sub.add_parser("rerank", help="rerank first-stage results and write a run", formatter_class=_Formatter)
    _common(p)
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--topics", required=True)
    p.add_argument("--topic-ids", type=_topic_ids)
    p.add_argument("--rel", metavar="CKPT")
    p.add_argument("--ext", metavar="CKPT")
    p.add_argument("--abs", metavar="CKPT")
    p.add_argument("--embeddings", metavar="VECTORS")
    p.add_argument("--no-rel", action="store_true", help="leave out the relevance ranking")
    p.add_argument("--no-abs", action="store_true", help="leave out the pseudo-query rankings")
    p.add_argument("--no-ext", action="store_true", help="no extracted keywords in pseudo-queries")
    p.add_argument("--mlt", action="store_true", help="more-like-this first stage")
    p.add_argument("--k", type=int, default=500, help="first-stage depth")
    p.add_argument("--rrf-k", type=float, default=60.0)
    p.add_argument("--rouge-stem", action="store_true")
    p.add_argument("--beam", type=int, help="override the checkpoint's beam width")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="inference threads")
    p.add_argument("--out", required=True, help="run file")
    p.add_argument("--tag", default="facetrank")
    p.add_argument("--debug-dir", help="per-topic JSON with ranks, scores and pseudo-queries")
    p.add_argument("--generations", help="dump generated facet summaries (TSV)")

    p = sub.add_parser("eval", help="P@10 and R-Prec of one or more runs", formatter_class=_Formatter)
    _common(p)
    p.add_argument("--run", action="append", required=True, help="run file (repeatable)")
    p.add_argument("--qrels", required=True)
    p.add_argument("--csv", action="store_true", help="CSV instead of a table")
    p.add_argument("--per-topic", action="store_true")
    p.add_argument("--out", help="also write the report here")

    p = sub.add_parser("export", help="dump score or attention matrices", formatter_class=_Formatter)
    what = p.add_subparsers(dest="what", metavar="WHAT", parser_class=_Parser)
    what.required = True
    k = what.add_parser("heatmap", help="EXT token scores of one document", formatter_class=_Formatter)
    _common(k)
    k.add_argument("--ext", required=True, metavar="CKPT")
    k.add_argument("--corpus", required=True)
    k.add_argument("--doc-id", required=True)
    k.add_argument("--out", required=True)
    k = what.add_parser("attention", help="ABS cross-attention for one document and facet",
                        formatter_class=_Formatter)
    _common(k)
    k.add_argument("--abs", required=True, metavar="CKPT")
    k.add_argument("--corpus", required=True)
    k.add_argument("--doc-id", required=True)
    k.add_argument("--facet", type=_facet, default=Facet.DISEASE)
    k.add_argument("--out", required=True)
    _show_defaults(parser)
    return parser


def _show_defaults(parser: argparse.ArgumentParser) -> None:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                _show_defaults(child)
        elif action.help is None and action.option_strings and action.default not in (None, False):
            action.help = "(default: %(default)s)"


def _read_config(path) -> list[tuple[str, str]]:
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        items.append((key.strip().replace("_", "-"), value.strip()))
    return items


def _config_argv(items, parser: argparse.ArgumentParser) -> list[str]:
    """Translate config entries into flags understood by ``parser``."""
    actions = {s: a for a in parser._actions for s in a.option_strings}
    out: list[str] = []
    for key, value in items:
        action = actions.get(f"--{key}")
        if action is None or key == "config":
            raise UsageError(f"config: unknown setting {key!r}")
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                out.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config: {key} expects a boolean, got {value!r}")
        else:
            out += [f"--{key}", value]
    return out


def _leaf_parser(parser: argparse.ArgumentParser, names: Sequence[str]) -> argparse.ArgumentParser:
    for name in names:
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        parser = sub.choices[name]
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        names = [args.command] + [n for n in (getattr(args, "kind", None), getattr(args, "what", None)) if n]
        leaf = _leaf_parser(parser, names)
        argv = list(argv)
        # Config flags go right after the subcommand names so explicit flags override them.
        at = max(argv.index(n) for n in names) + 1
        args = parser.parse_args(argv[:at] + _config_argv(_read_config(args.config), leaf) + argv[at:])
    return args


# ------------------------------------------------------------------ helpers


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _topics(args) -> list:
    topics = load_topics(_require(args.topics, "topics file"))
    if getattr(args, "topic_ids", None):
        known = {t.topic_id for t in topics}
        missing = [t for t in args.topic_ids if t not in known]
        if missing:
            raise DataError(f"unknown topic ids: {', '.join(missing)}")
        wanted = set(args.topic_ids)
        topics = [t for t in topics if t.topic_id in wanted]
    return topics


def _profile_value(args, name: str):
    value = getattr(args, name, None)
    return PROFILES[args.profile][name] if value is None else value


def _log_path(args) -> str:
    return args.log or str(Path(args.out).with_suffix(".log.csv"))


def _load_index_dir(path):
    from .index import InvertedIndex

    d = _require(path, "index directory")
    return InvertedIndex.load(_require(d / INDEX_FILE, "index file")), load_corpus(_require(d / CORPUS_FILE, "corpus"))


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    from .synth import generate_synthetic

    col = generate_synthetic(args.seed, args.docs, args.topics)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(col.corpus, out / "corpus.jsonl")
    write_topics(col.topics, out / "topics.jsonl")
    write_qrels(col.qrels, out / "qrels.txt")
    write_mesh_names(col.mesh_names, out / "mesh_names.tsv")
    logger.info("wrote %d documents and %d topics to %s", len(col.corpus), len(col.topics), out)


def cmd_index(args) -> None:
    from .index import build_index

    corpus = load_corpus(_require(args.corpus, "corpus"))
    index = build_index(corpus, [f.strip() for f in args.fields.split(",") if f.strip()], args.k1, args.b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index.save(out / INDEX_FILE)
    if Path(args.corpus).resolve() != (out / CORPUS_FILE).resolve():
        shutil.copyfile(args.corpus, out / CORPUS_FILE)
    logger.info("indexed %d documents into %s", index.n_docs, out)


def cmd_search(args) -> None:
    from .index import BM25Retriever

    index, _ = _load_index_dir(args.index)
    retriever = BM25Retriever.from_index(index, k=args.k, use_mlt=args.mlt)
    runs = [retriever.search(t) for t in _topics(args)]
    write_run(runs, args.out, args.tag)
    logger.info("wrote %d topics to %s", len(runs), args.out)


def cmd_embed(args) -> None:
    from .embed import annotate_corpus, train_embeddings

    corpus = load_corpus(_require(args.corpus, "corpus"))
    names = load_mesh_names(_require(args.mesh_names, "MeSH name table") if args.mesh_names else None)
    t0 = time.time()
    table = train_embeddings(
        annotate_corpus(corpus, names), dim=args.dim, window=args.window, negatives=args.negatives,
        epochs=args.epochs, seed=args.seed, lr=args.lr, min_count=args.min_count, batch_size=args.batch_size,
    )
    table.save(args.out)
    logger.info("trained %d vectors in %.1fs -> %s", len(table.tokens), time.time() - t0, args.out)


def _train_examples(args, kind: str):
    corpus = load_corpus(_require(args.corpus, "corpus"))
    qrels = load_qrels(_require(args.qrels, "qrels"))
    names = load_mesh_names(_require(args.mesh_names, "MeSH name table") if args.mesh_names else None)
    examples = build_training_examples(_topics(args), qrels, corpus, kind, names)
    if not examples:
        raise DataError("no training examples: the selected topics have no usable judgments")
    return examples


def _encoder_params(args) -> dict:
    return {
        "layers": _profile_value(args, "layers"), "model_dim": _profile_value(args, "model_dim"),
        "heads": _profile_value(args, "heads"), "ffn_dim": _profile_value(args, "ffn_dim"),
        "max_len": _profile_value(args, "max_len"), "vocab_size": _profile_value(args, "vocab_size"),
        "steps": _profile_value(args, "steps"), "batch_size": args.batch_size,
        "lr": _profile_value(args, "lr"), "beta1": args.beta1, "beta2": args.beta2,
        "w0": args.w0, "w1": args.w1, "threshold": args.threshold, "dropout": args.dropout,
        "val_fraction": args.val_fraction, "eval_every": args.eval_every,
        "patience": args.patience, "factor": args.factor, "seed": args.seed, "log_path": _log_path(args),
    }


def cmd_train(args) -> None:
    if args.kind == "embed":
        return cmd_embed(args)
    from .nn.training import load_checkpoint

    t0 = time.time()
    if args.kind in ("rel", "ext"):
        from .ext import KeywordExtractor
        from .rel import RelClassifier

        cls = RelClassifier if args.kind == "rel" else KeywordExtractor
        examples = _train_examples(args, args.kind)
        if args.resume:
            est = cls.load(_require(args.resume, "checkpoint"))
            est.set_params(steps=_profile_value(args, "steps"), log_path=_log_path(args))
            est.fit(examples, resume=load_checkpoint(args.resume, args.kind))
        else:
            est = cls(**_encoder_params(args)).fit(examples)
    else:
        from .abs import PseudoQueryGenerator
        from .embed import load_embeddings
        from .ext import KeywordExtractor

        if not args.ext and not args.resume:
            raise UsageError(
                "train abs: --ext is required; the generator's encoder starts from a trained keyword extractor"
            )
        examples = _train_examples(args, "abs")
        if args.resume:
            est = PseudoQueryGenerator.load(_require(args.resume, "checkpoint"))
            est.set_params(steps=_profile_value(args, "steps"), log_path=_log_path(args))
            est.fit(examples, resume=load_checkpoint(args.resume, "abs"))
        else:
            ext = KeywordExtractor.load(_require(args.ext, "keyword extractor checkpoint"))
            table = load_embeddings(_require(args.embeddings, "embeddings")) if args.embeddings else None
            est = PseudoQueryGenerator(
                layers=_profile_value(args, "dec_layers"), model_dim=ext.config_.model_dim,
                heads=_profile_value(args, "heads"), ffn_dim=_profile_value(args, "dec_ffn_dim"),
                max_target_len=args.max_target_len, steps=_profile_value(args, "steps"),
                batch_size=args.batch_size, encoder_lr=_profile_value(args, "encoder_lr"),
                decoder_lr=_profile_value(args, "decoder_lr"), beta1=args.beta1, beta2=args.beta2,
                val_fraction=args.val_fraction, eval_every=args.eval_every, patience=args.patience,
                factor=args.factor, dropout=args.dropout, beam=args.beam, alpha=args.alpha, beta=args.beta,
                freeze_embeddings=args.freeze_embeddings, seed=args.seed, log_path=_log_path(args),
            ).fit(examples, extractor=ext, embeddings=table)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    est.save(args.out)
    logger.info("trained %s for %d steps in %.1fs -> %s", args.kind, est.step_, time.time() - t0, args.out)


def cmd_rerank(args) -> None:
    from .abs import PseudoQueryGenerator, write_generations
    from .embed import load_embeddings
    from .ext import KeywordExtractor
    from .index import BM25Retriever
    from .rel import RelClassifier
    from .rerank import FacetReranker

    torch.set_num_threads(max(1, args.workers))
    use_rel, use_abs, use_ext = not args.no_rel, not args.no_abs, not args.no_ext
    need = {"rel": use_rel, "abs": use_abs, "ext": use_abs and use_ext}
    for name, needed in need.items():
        if needed and not getattr(args, name):
            raise UsageError(f"rerank: --{name} is required unless --no-{name} is given")
    index, corpus = _load_index_dir(args.index)
    topics = _topics(args)
    rel = RelClassifier.load(_require(args.rel, "relevance checkpoint")) if use_rel else None
    ext = KeywordExtractor.load(_require(args.ext, "extractor checkpoint")) if need["ext"] else None
    gen = PseudoQueryGenerator.load(_require(args.abs, "generator checkpoint")) if use_abs else None
    if gen is not None and args.beam:
        gen.set_params(beam=args.beam)
    table = None
    if use_abs:
        if args.embeddings:
            table = load_embeddings(_require(args.embeddings, "embeddings"))
        else:
            logger.warning("no --embeddings given; the similarity ranking is left out")
    reranker = FacetReranker(
        BM25Retriever.from_index(index, k=args.k, use_mlt=args.mlt), rel, ext, gen, table,
        use_rel=use_rel, use_abs=use_abs, use_ext=use_ext, k=args.k, rrf_k=args.rrf_k,
        rouge_stem=args.rouge_stem,
    ).fit(corpus)
    runs = []
    debug_dir = Path(args.debug_dir) if args.debug_dir else None
    if debug_dir:
        debug_dir.mkdir(parents=True, exist_ok=True)
    for case in topics:
        t0 = time.time()
        ranked, debug = reranker.rerank_topic(case)
        runs.append(ranked)
        if debug_dir:
            (debug_dir / f"topic_{case.topic_id}.json").write_text(debug.to_json() + "\n", encoding="utf-8")
        logger.info("topic %s: %d documents in %.1fs", case.topic_id, len(ranked), time.time() - t0)
    write_run(runs, args.out, args.tag)
    if args.generations:
        if gen is None:
            raise UsageError("rerank: --generations needs the generator")
        rows = []
        for doc_id in sorted(reranker.facet_outputs_):
            rows += [(doc_id, f, t) for f, t in reranker.facet_outputs_[doc_id].items()]
        write_generations(rows, args.generations)
    logger.info("wrote %d topics to %s", len(runs), args.out)


def cmd_eval(args) -> None:
    from .eval import compare_runs, evaluate_run, format_csv, format_table

    qrels = load_qrels(_require(args.qrels, "qrels"))
    runs = {}
    for path in args.run:
        run = load_run(_require(path, "run file"))
        tag = run_tag(path) or Path(path).stem
        if tag in runs:
            tag = f"{tag}:{Path(path).name}"
        runs[tag] = run
    rows = compare_runs(runs, qrels)
    report = format_csv(rows) if args.csv else format_table(rows) + "\n"
    if args.per_topic:
        lines = []
        for tag, run in runs.items():
            rep = evaluate_run(run, qrels, tag)
            for topic in sorted(rep.p_at_10, key=lambda t: (len(t), t)):
                rp = rep.r_prec.get(topic)
                lines.append(f"{tag}\t{topic}\tP@10={rep.p_at_10[topic]:.4f}\t"
                             f"R-Prec={'n/a' if rp is None else f'{rp:.4f}'}")
        report += "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")


def cmd_export(args) -> None:
    corpus = {d.id: d for d in load_corpus(_require(args.corpus, "corpus"))}
    doc = corpus.get(args.doc_id)
    if doc is None:
        raise DataError(f"document {args.doc_id!r} is not in {args.corpus}")
    if args.what == "heatmap":
        from .ext import KeywordExtractor, export_token_heatmap

        ext = KeywordExtractor.load(_require(args.ext, "extractor checkpoint"))
        export_token_heatmap(ext.score(doc), args.out)
    else:
        from .abs import PseudoQueryGenerator, export_cross_attention

        gen = PseudoQueryGenerator.load(_require(args.abs, "generator checkpoint"))
        export_cross_attention(doc, args.facet, gen, args.out)
    logger.info("wrote %s", args.out)


COMMANDS = {
    "synth": cmd_synth, "index": cmd_index, "search": cmd_search, "embed-train": cmd_embed,
    "train": cmd_train, "rerank": cmd_rerank, "eval": cmd_eval, "export": cmd_export,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except OSError as exc:
        print(f"facetrank: cannot read config: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"facetrank: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"facetrank: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"facetrank: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
