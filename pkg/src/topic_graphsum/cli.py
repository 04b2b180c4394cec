"""Command-line interface: ``topic-graphsum <subcommand> ...``.

Data goes to standard output or files, diagnostics to standard error.
Exit codes: 0 success, 1 error, 2 missing checkpoint, 3 corrupt checkpoint.
"""

from __future__ import annotations

import argparse
import dataclasses
import html
import json
import logging
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .checkpoint import ModelCheckpoint
from .config import ABLATIONS, ModelConfig, TrainConfig, build, read_config_file
from .errors import CheckpointNotFoundError, CorruptCheckpointError, TopicGraphSumError
from .ntm import format_topics
from .rouge import flatten, mean_f1, rouge
from .synthetic import make_synthetic_corpus
from .text import (
    LabeledDocument,
    SPECIALS,
    RawDocument,
    Vocabulary,
    build_vocabulary,
    corpus_statistics,
    iter_jsonl,
    label_document,
    read_labeled_corpus,
    read_raw_corpus,
    tokenize,
    write_labeled_corpus,
    write_raw_corpus,
)
from .trainer import Summarizer, baseline_scores, evaluate, train

log = logging.getLogger("topic_graphsum")

EXIT_ERROR = 1
EXIT_MISSING_CHECKPOINT = 2
EXIT_CORRUPT_CHECKPOINT = 3

LABELED_FILE = "labeled.jsonl"
VOCAB_FILE = "vocab.txt"

# command-line flag -> config field
FLAG_FIELDS = {
    "seed": "seed",
    "lam": "lam",
    "topics": "n_topics",
    "ablation": "ablation",
    "k": "select_k",
    "epochs": "epochs",
    "pretrain_epochs": "ntm_pretrain_epochs",
    "batch_size": "batch_size",
}


# ---------------------------------------------------------------------------
# configuration and corpus loading
# ---------------------------------------------------------------------------


def resolve_configs(args: argparse.Namespace) -> tuple[ModelConfig, TrainConfig]:
    """Flags override the config file, which overrides defaults."""
    values: dict = read_config_file(args.config) if getattr(args, "config", None) else {}
    for flag, key in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    return build(ModelConfig, values), build(TrainConfig, values)


def load_training_data(path: str | Path) -> tuple[list[LabeledDocument], Vocabulary]:
    """A preprocess output directory, or a labeled JSONL file next to its vocabulary."""
    p = Path(path)
    corpus, vocab = (p / LABELED_FILE, p / VOCAB_FILE) if p.is_dir() else (p, p.parent / VOCAB_FILE)
    if not corpus.is_file() or not vocab.is_file():
        raise TopicGraphSumError(f"{path}: expected {LABELED_FILE} and {VOCAB_FILE} from `preprocess`")
    return read_labeled_corpus(corpus), Vocabulary.load(vocab)


def load_documents(path: str | Path, vocab: Vocabulary, tcfg: TrainConfig, skip_bad: bool = False) -> list[LabeledDocument]:
    """Raw or labeled JSONL, (re-)encoded with ``vocab``; stored labels are kept."""
    p = Path(path) / LABELED_FILE if Path(path).is_dir() else Path(path)
    docs = []
    first = next(iter_jsonl(p, skip_bad), None)
    if first is not None and "token_ids" in first[1]:
        for d in read_labeled_corpus(p):
            docs.append(label_document(d.to_raw(), vocab, tcfg.max_select_oracle, tcfg.max_sentences, d.labels or None))
    else:
        for d in read_raw_corpus(p, skip_bad):
            docs.append(label_document(d, vocab, tcfg.max_select_oracle, tcfg.max_sentences))
    return docs


def load_model(path: str | Path) -> Summarizer:
    return Summarizer.from_checkpoint(ModelCheckpoint.load(path))


def _output(args: argparse.Namespace) -> TextIO:
    out = getattr(args, "out", None)
    return open(out, "w", encoding="utf-8", newline="\n") if out else sys.stdout


def _close(fh: TextIO) -> None:
    if fh is not sys.stdout:
        fh.close()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    corpus = make_synthetic_corpus(
        seed=args.seed or 0,
        n_topics=args.topics or 3,
        words_per_topic=args.words_per_topic,
        n_docs=args.docs,
        sentences_per_doc=args.sentences,
        concentration=args.concentration,
    )
    if args.out:
        write_raw_corpus(corpus.documents, args.out)
    else:
        for d in corpus.documents:
            sys.stdout.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    _, tcfg = resolve_configs(args)
    raw = read_raw_corpus(args.corpus, skip_bad=args.skip_bad)
    vocab = build_vocabulary(raw, min_freq=args.min_freq, max_df=args.max_df)
    docs = [label_document(d, vocab, tcfg.max_select_oracle, tcfg.max_sentences) for d in raw]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_labeled_corpus(docs, out / LABELED_FILE)
    vocab.save(out / VOCAB_FILE)
    stats = corpus_statistics(raw)
    n_special = len(SPECIALS)
    rows = [
        ("documents", f"{stats['docs']}"),
        ("avg sentences", f"{stats['avg_sentences']:.2f}"),
        ("avg doc tokens", f"{stats['avg_doc_tokens']:.2f}"),
        ("avg summary tokens", f"{stats['avg_summary_tokens']:.2f}"),
        ("vocab size", f"{len(vocab) - n_special} + {n_special} specials"),
        ("bag-of-words vocab", f"{vocab.ntm_size}"),
    ]
    for name, value in rows:
        print(f"{name:<20} {value}")
    return 0


def cmd_pretrain_ntm(args: argparse.Namespace) -> int:
    mcfg, tcfg = resolve_configs(args)
    docs, vocab = load_training_data(args.data)
    if mcfg.ablation == "no_ntm":
        raise TopicGraphSumError("pretrain-ntm: the no_ntm ablation has no topic model")
    res = train(docs, vocab, mcfg, dataclasses.replace(tcfg, epochs=0))
    res.checkpoint.save(args.out)
    if res.pretrain_log:
        print(f"pretrain epochs {len(res.pretrain_log)}  final L_NTM {res.pretrain_log[-1]:.4f}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    mcfg, tcfg = resolve_configs(args)
    docs, vocab = load_training_data(args.data)
    init = None
    if args.checkpoint:
        init = load_model(args.checkpoint)
        if init.vocab != vocab:
            raise TopicGraphSumError("train: checkpoint vocabulary differs from the training data's")
        mcfg = init.model_config
    val = load_documents(args.val, vocab, tcfg) if args.val else None
    res = train(docs, vocab, mcfg, tcfg, val_docs=val, init=init)
    res.checkpoint.save(args.out)
    metrics_path = args.metrics or f"{args.out}.metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        for m in res.metrics:
            fh.write(json.dumps(m, sort_keys=True) + "\n")
    print(f"{'epoch':>5} {'L':>10} {'L_SC':>10} {'L_NTM':>10} {'acc':>6} {'val_R1':>7}")
    for m in res.metrics:
        l_ntm = "-" if m["L_NTM"] is None else f"{m['L_NTM']:.4f}"
        v = "-" if m["val_rouge1"] is None else f"{100 * m['val_rouge1']:.2f}"
        print(f"{m['epoch']:>5} {m['L']:>10.4f} {m['L_SC']:>10.4f} {l_ntm:>10} {m['accuracy']:>6.3f} {v:>7}")
    return 0


def _rows(name: str, scores: tuple[float, float, float]) -> str:
    r1, r2, rl = scores
    return f"{name:<10} {100 * r1:>7.2f} {100 * r2:>7.2f} {100 * rl:>7.2f}"


def _candidate_scores(refs: Sequence[RawDocument], path: str) -> tuple[float, float, float]:
    """Score the ``summary`` field of a candidate file against references by id."""
    cands = {d.id: d for d in read_raw_corpus_any(path)}
    scores = []
    for ref in refs:
        if ref.id not in cands:
            raise TopicGraphSumError(f"eval: no candidate for document {ref.id!r}")
        cand = flatten(tokenize(s) for s in cands[ref.id].reference_summary)
        scores.append(rouge(cand, flatten(tokenize(s) for s in ref.reference_summary)))
    return mean_f1(scores)


def read_raw_corpus_any(path: str | Path) -> list[RawDocument]:
    first = next(iter_jsonl(path), None)
    if first is not None and "token_ids" in first[1]:
        return [d.to_raw() for d in read_labeled_corpus(path)]
    return read_raw_corpus(path)


def cmd_eval(args: argparse.Namespace) -> int:
    mcfg, tcfg = resolve_configs(args)
    k = tcfg.select_k
    print(f"{'system':<10} {'R-1':>7} {'R-2':>7} {'R-L':>7}")
    if args.candidates:
        refs = read_raw_corpus_any(args.corpus)
        if not refs:
            raise TopicGraphSumError("eval: empty corpus")
        print(_rows("candidate", _candidate_scores(refs, args.candidates)))
        return 0
    if not args.checkpoint:
        raise TopicGraphSumError("eval: --checkpoint or --candidates is required")
    model = load_model(args.checkpoint)
    docs = load_documents(args.corpus, model.vocab, tcfg)
    if not docs:
        raise TopicGraphSumError("eval: empty corpus")
    base = baseline_scores(docs, k, rng_seed=tcfg.seed)
    ev = evaluate(model, docs, k)
    print(_rows(f"Lead-{k}", base["lead"]))
    print(_rows("Oracle", base["oracle"]))
    print(_rows("model", (ev["rouge1"], ev["rouge2"], ev["rougeL"])))
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    _, tcfg = resolve_configs(args)
    model = _require_checkpoint(args)
    docs = load_documents(args.corpus, model.vocab, tcfg)
    fh = _output(args)
    try:
        for d, chosen in zip(docs, model.summarize(docs, tcfg.select_k)):
            fh.write(json.dumps({"id": d.id, "selected": chosen, "summary": [d.sentences[i] for i in chosen]}, ensure_ascii=False) + "\n")
    finally:
        _close(fh)
    return 0


def cmd_topics(args: argparse.Namespace) -> int:
    model = _require_checkpoint(args)
    if model.model_config.ablation == "no_ntm":
        raise TopicGraphSumError("topics: the no_ntm ablation has no topics")
    print(format_topics(model.top_words(args.words)))
    return 0


def tw_opacity(tw: np.ndarray) -> np.ndarray:
    """Linear ramp from min TW (0.15) to max TW (1.0); uniform TW maps to 1.0."""
    lo, hi = float(np.min(tw)), float(np.max(tw))
    if hi - lo <= 1e-12:
        return np.ones_like(tw)
    return 0.15 + 0.85 * (tw - lo) / (hi - lo)


def render_text_report(doc: LabeledDocument, tw: np.ndarray, selected: Sequence[int]) -> str:
    lines = [f"# {doc.id}"]
    for i, (s, w) in enumerate(zip(doc.sentences, tw)):
        mark = "*" if i in selected else " "
        lines.append(f"[TW={w:.4f}] {mark} {s}")
    return "\n".join(lines) + "\n"


def render_html_report(docs: Sequence[LabeledDocument], tws: Sequence[np.ndarray], selections: Sequence[Sequence[int]]) -> str:
    parts = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>topical weights</title></head><body>',
    ]
    for doc, tw, selected in zip(docs, tws, selections):
        parts.append(f"<section><h2>{html.escape(doc.id)}</h2><p>")
        for i, (s, a) in enumerate(zip(doc.sentences, tw_opacity(tw))):
            style = f"background-color: rgba(255, 170, 0, {a:.3f});"
            if i in selected:
                style += " text-decoration: underline;"
            parts.append(f'<span style="{style}" title="TW={tw[i]:.4f}">{html.escape(s)}</span>')
        parts.append("</p></section>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    _, tcfg = resolve_configs(args)
    model = _require_checkpoint(args)
    docs = load_documents(args.corpus, model.vocab, tcfg)
    tws = model.topical_weights(docs)
    selections = model.summarize(docs, tcfg.select_k)
    fh = _output(args)
    try:
        if args.format == "html":
            fh.write(render_html_report(docs, tws, selections))
        else:
            fh.write("\n".join(render_text_report(d, tw, s) for d, tw, s in zip(docs, tws, selections)))
    finally:
        _close(fh)
    return 0


def _require_checkpoint(args: argparse.Namespace) -> Summarizer:
    if not args.checkpoint:
        raise TopicGraphSumError(f"{args.command}: --checkpoint is required")
    return load_model(args.checkpoint)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--k", type=int, help="sentences to select")
    p.add_argument("--lambda", dest="lam", type=float, help="weight of the topic-model loss")
    p.add_argument("--topics", type=int, help="number of topics K")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--format", choices=("text", "html"), default="text")
    p.add_argument("--epochs", type=int)
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="topic-graphsum", description="Topic-aware graph summarizer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic topical corpus")
    p.add_argument("--docs", type=int, default=100)
    p.add_argument("--sentences", type=int, default=6)
    p.add_argument("--words-per-topic", dest="words_per_topic", type=int, default=20)
    p.add_argument("--concentration", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="tokenize, build vocabulary, compute oracle labels")
    p.add_argument("corpus")
    p.add_argument("--skip-bad", dest="skip_bad", action="store_true")
    p.add_argument("--min-freq", dest="min_freq", type=int, default=1)
    p.add_argument("--max-df", dest="max_df", type=float, default=0.5)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain-ntm", parents=[common], help="pretrain the topic model only")
    p.add_argument("data", help="preprocess output directory")
    p.set_defaults(func=cmd_pretrain_ntm)

    p = sub.add_parser("train", parents=[common], help="train end to end")
    p.add_argument("data", help="preprocess output directory")
    p.add_argument("--val", help="validation corpus for early stopping")
    p.add_argument("--metrics", help="per-epoch JSON-lines log (default: <out>.metrics.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="ROUGE against references")
    p.add_argument("corpus")
    p.add_argument("--candidates", help="JSONL whose `summary` fields are scored directly")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("summarize", parents=[common], help="select summary sentences")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("topics", parents=[common], help="top words per topic")
    p.add_argument("--words", type=int, default=10)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("report", parents=[common], help="sentence topical weights, highlighted")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command in ("pretrain-ntm", "train") and not args.out:
            raise TopicGraphSumError(f"{args.command}: --out is required")
        if args.command == "preprocess" and not args.out:
            raise TopicGraphSumError("preprocess: --out directory is required")
        return args.func(args)
    except CheckpointNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_CHECKPOINT
    except CorruptCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_CHECKPOINT
    except (TopicGraphSumError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
