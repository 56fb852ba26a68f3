"""
Command line: train, parse, eval, sample, gradcheck, bench.

Usage:
    python -m src.cli.main train --train train.txt --dev dev.txt --out-dir runs/a --seed 1
    python -m src.cli.main parse --model runs/a/best.npm --input test.txt --output test.discbracket
    python -m src.cli.main eval --gold gold.discbracket --pred test.discbracket --baselines
    python -m src.cli.main sample --random-grammar --count 2000 --seed 7 --output train.discbracket
    python -m src.cli.main gradcheck --seed 0
    python -m src.cli.main bench --m1 150 --m2 150 --p 450 --lengths 10,20,30

Exit status: 0 success, 2 usage or configuration, 3 data, 4 numeric failure.
"""

import argparse
import signal
import sys
from collections import Counter

import numpy as np
import pandas as pd

from src.atomic import atomic_open
from src.cli import display
from src.cli.bench import BENCH_LENGTHS, METHODS, run_bench
from src.config.log import configure_logging, get_logger
from src.config.settings import settings
from src.config.train_config import ModelConfig, TrainConfig, build_config, merge_overrides, read_key_values
from src.corpus.baselines import baseline_trees
from src.corpus.discbracket import DEFAULT_PUNCT_TAGS, read_discbracket, strip_punctuation, write_discbracket
from src.corpus.metrics import (
    corpus_f1,
    evaluation_sets,
    f1_by_length,
    metrics_table,
    predicted_discontinuity_rate,
    recall_by_label,
)
from src.corpus.vocab import Vocab, build_vocab, encode, read_plain
from src.errors import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, InputError, LcfrsError
from src.grammar.core import GrammarDims, normalize_random
from src.grammar.sampler import check_length_bounds, sample_corpus
from src.grammar.serialize import load_grammar, save_grammar
from src.inference.batch import flat_tree, logz_table, parse_corpus, with_tokens
from src.model.checkpoint import load_checkpoint
from src.model.factored import random_factored
from src.model.neural import NeuralParams, forward
from src.oracle.enumerate import symbol_name
from src.training.gradcheck import grad_check
from src.training.trainer import Trainer

log = get_logger("cli")


def _ranks(text: str) -> tuple[int, int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("ranks are four comma-separated integers r1,r2,r3,r4")
    return tuple(parts)


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = settings.SEED
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**31))
        display.print_warning(f"no --seed given, using generated seed {seed}")
    log.info("seed", seed=seed)
    return seed


def _read_corpus(path: str, fmt: str, punct_tags) -> tuple[list[list[str]], list | None]:
    """Sentences and, for discbracket input, their gold trees."""
    if fmt == "plain":
        return read_plain(path), None
    sentences, trees = [], []
    for _, tree in read_discbracket(path):
        if punct_tags:
            tree = strip_punctuation(tree, punct_tags)
            if tree is None:
                continue
        sentences.append([str(t) for t in tree.tokens()])
        trees.append(tree)
    return sentences, trees


def _punct_tags(args) -> tuple[str, ...]:
    if not getattr(args, "strip_punct", False):
        return ()
    return tuple(args.punct_tags.split(",")) if args.punct_tags else DEFAULT_PUNCT_TAGS


def _write_tsv(path: str, frame) -> None:
    with atomic_open(path, "w") as fh:
        frame.to_csv(fh, sep="\t", index=False)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    file_values = read_key_values(args.config) if args.config else {}
    seed = args.seed if args.seed is not None or "seed" in file_values else _resolve_seed(None)
    cli_values = {
        "learning_rate": args.lr, "batch_size": args.batch_size, "max_epochs": args.max_epochs,
        "patience": args.patience, "curriculum_max_len": args.curriculum_max_len,
        "early_stop_metric": args.early_stop_metric, "dtype": args.dtype, "workers": args.workers, "seed": seed,
    }
    config: TrainConfig = build_config(TrainConfig, merge_overrides(file_values, cli_values))

    tags = _punct_tags(args)
    train_words, _ = _read_corpus(args.train, args.format, tags)
    dev_words, dev_gold = _read_corpus(args.dev, args.format, tags) if args.dev else ([], None)
    if config.early_stop_metric == "f1" and dev_gold is None:
        raise InputError("early_stop_metric=f1 needs a discbracket --dev file")

    vocab = build_vocab(train_words, args.vocab_size)
    model_values = merge_overrides(
        {"p": args.p} if args.preset is None else ModelConfig.preset(args.preset).model_dump(include={"p"}),
        {"d": args.d, "m1": args.m1, "m2": args.m2, "v": len(vocab)}
        | dict(zip(("r1", "r2", "r3", "r4"), args.ranks or (None,) * 4)),
    )
    model: ModelConfig = build_config(ModelConfig, model_values)
    display.print_config("training", config.model_dump())
    display.print_config("model", model.model_dump())
    log.info("effective_config", train=config.model_dump(), model=model.model_dump())

    train_ids = [encode(vocab, s) for s in train_words]
    dev_ids = [encode(vocab, s) for s in dev_words]
    if args.resume:
        trainer = Trainer.resume(config, train_ids, dev_ids, args.out_dir, dev_gold)
    else:
        dims = GrammarDims(model.m1, model.m2, model.p, model.v)
        params = NeuralParams.xavier(dims, model.ranks, model.d, seed, config.dtype)
        trainer = Trainer(config, train_ids, dev_ids, params, args.out_dir, dev_gold, list(vocab.words))

    signal.signal(signal.SIGINT, lambda *_: trainer.stop())
    with display.status("training"):
        result = trainer.run()
    frame = pd.DataFrame([vars(r) for r in result.history])
    display.print_frame("training log", frame)
    display.print_success(f"best epoch {result.best_epoch} ({result.stop_reason}); checkpoints in {args.out_dir}")
    return EXIT_OK


def _load_model(path: str):
    checkpoint = load_checkpoint(path)
    fg = forward(checkpoint.params) if checkpoint.kind == "neural" else checkpoint.factored
    vocab = Vocab(tuple(checkpoint.vocab)) if checkpoint.vocab else None
    if vocab is not None and len(vocab) != fg.dims.v:
        raise InputError(f"checkpoint vocabulary has {len(vocab)} words but the grammar expects {fg.dims.v}")
    return fg, vocab


def _as_ids(words: list[str], vocab: Vocab | None, line_no: int) -> list[int]:
    if vocab is not None:
        return encode(vocab, words)
    try:
        return [int(w) for w in words]
    except ValueError as e:
        raise InputError(f"line {line_no}: model has no vocabulary, input must be integer ids") from e


def cmd_parse(args) -> int:
    fg, vocab = _load_model(args.model)
    sentences, _ = _read_corpus(args.input, args.format, _punct_tags(args))
    empty = [i + 1 for i, words in enumerate(sentences) if not words]
    if empty:
        raise InputError(f"empty sentences on lines {empty}")
    ids = [_as_ids(words, vocab, i + 1) for i, words in enumerate(sentences)]
    with display.status(f"parsing {len(ids)} sentences"):
        results = parse_corpus(fg, ids, args.workers, max_len=args.max_len)

    trees = []
    for words, result in zip(sentences, results):
        if result.tree is None:
            display.print_warning(f"sentence {result.index}: {result.error}")
            trees.append(flat_tree(words))
        else:
            trees.append(with_tokens(result.tree, words))
    write_discbracket(args.output, trees)
    if args.logz:
        _write_tsv(args.logz, logz_table(results))

    flat = sum(1 for r in results if r.flat)
    failed = sum(1 for r in results if not r.ok)
    display.print_success(f"wrote {len(trees)} trees to {args.output} ({flat} flat, {failed} failed)")
    return EXIT_OK if not failed else EXIT_DATA


def cmd_eval(args) -> int:
    tags = _punct_tags(args)
    gold_words, gold_trees = _read_corpus(args.gold, "discbracket", tags)
    pred_trees = [t for _, t in read_discbracket(args.pred)]
    golds, preds = evaluation_sets(gold_trees, pred_trees, args.max_len)

    score = corpus_f1(golds, preds)
    frame = metrics_table(score, f1_by_length(golds, preds) if args.by_length else None)
    frame.insert(0, "system", "model")
    if args.baselines:
        for kind in ("left", "right", "random"):
            base = baseline_trees(gold_words, kind, seed=args.seed or 0)
            bg, bp = evaluation_sets(gold_trees, base, args.max_len)
            row = metrics_table(corpus_f1(bg, bp))
            row.insert(0, "system", kind)
            frame = pd.concat([frame, row], ignore_index=True)
    display.print_frame("evaluation", frame)

    counts = Counter(label for g in golds for _, label in g.labeled)
    recalls = recall_by_label(golds, preds)
    disc_recalls = recall_by_label(golds, preds, discontinuous_only=True)
    top = [label for label, _ in counts.most_common(args.top_labels)]
    if top:
        labels = pd.DataFrame({
            "label": top,
            "gold_spans": [counts[lab] for lab in top],
            "recall": [recalls[lab] for lab in top],
            "disc_recall": [disc_recalls.get(lab, float("nan")) for lab in top],
        })
        display.print_frame("recall by label", labels)
    display.print_success(f"predicted discontinuity rate {predicted_discontinuity_rate(preds):.4f}")
    if args.tsv:
        _write_tsv(args.tsv, frame)
    return EXIT_OK


def cmd_sample(args) -> int:
    check_length_bounds(args.min_len, args.max_len)
    seed = _resolve_seed(args.seed)
    if args.grammar:
        grammar = load_grammar(args.grammar)
    else:
        grammar = normalize_random(GrammarDims(args.m1, args.m2, args.p, args.v), args.grammar_seed)

    samples = sample_corpus(grammar, args.count, seed, args.max_len, args.min_len)
    if args.save_grammar and not args.grammar:
        save_grammar(args.save_grammar, grammar)
    trees = [with_tokens(s.tree, [f"w{t}" for t in s.sentence]) for s in samples]
    write_discbracket(args.output, trees, label_fn=symbol_name)
    if args.text:
        with atomic_open(args.text, "w") as fh:
            for s in samples:
                fh.write(" ".join(f"w{t}" for t in s.sentence) + "\n")
    display.print_success(f"sampled {len(samples)} sentences into {args.output}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args.seed)
    dims = GrammarDims(args.m1, args.m2, args.p, args.v)
    params = NeuralParams.xavier(dims, args.ranks, args.d, seed, "float64")
    sentence = np.random.default_rng(seed).integers(0, args.v, size=args.length).tolist()
    with display.status(f"checking {args.probes} gradient entries"):
        result = grad_check(params, sentence, args.epsilon, args.probes, seed)
    worst = result.worst()
    message = f"max relative error {result.max_rel_error:.3e}"
    if worst is not None:
        message += f" at {worst.name}{list(worst.index)}"
    if result.max_rel_error > args.tolerance:
        display.print_error(f"{message} exceeds {args.tolerance:g}", EXIT_NUMERIC)
        return EXIT_NUMERIC
    display.print_success(message)
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    dims = GrammarDims(args.m1, args.m2, args.p, args.v)
    fg = random_factored(dims, args.ranks, seed)
    with display.status("benchmarking"):
        frame = run_bench(fg, args.lengths, args.repeats, args.max_seconds, seed, args.methods)
    display.print_frame("inside timings", frame)
    if args.output:
        _write_tsv(args.output, frame)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _grammar_dims(parser: argparse.ArgumentParser, m1=2, m2=2, p=3, v=20) -> None:
    parser.add_argument("--m1", type=int, default=m1, help="fan-out-1 nonterminals")
    parser.add_argument("--m2", type=int, default=m2, help="fan-out-2 nonterminals")
    parser.add_argument("--p", type=int, default=p, help="preterminals")
    parser.add_argument("--v", type=int, default=v, help="vocabulary size")


def _punct_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strip-punct", action="store_true", help="drop punctuation preterminals")
    parser.add_argument("--punct-tags", default=None, help="comma-separated punctuation tags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discolcfrs", description="Restricted LCFRS-2 induction and parsing")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-format", choices=["console", "json"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a neural grammar")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["plain", "discbracket"], default="plain")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="continue from out-dir/last.npm")
    p.add_argument("--vocab-size", type=int, default=10000)
    p.add_argument("--preset", choices=["p45", "p450", "p4500"])
    p.add_argument("--p", type=int, default=45)
    p.add_argument("--m1", type=int)
    p.add_argument("--m2", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--ranks", type=_ranks, help="r1,r2,r3,r4")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--curriculum-max-len", type=int)
    p.add_argument("--early-stop-metric", choices=["perplexity", "f1"])
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--workers", type=int)
    _punct_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="MBR-decode sentences with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=["plain", "discbracket"], default="plain")
    p.add_argument("--max-len", type=int, default=settings.MAX_PARSE_LEN)
    p.add_argument("--workers", type=int, default=settings.WORKERS)
    p.add_argument("--logz", help="write a per-sentence logZ TSV here")
    _punct_flags(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="unlabeled F1 and DF1 against gold trees")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--baselines", action="store_true", help="also score left, right and random trees")
    p.add_argument("--by-length", action="store_true")
    p.add_argument("--top-labels", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--tsv", help="write the metrics table here")
    _punct_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="sample a synthetic corpus with gold trees")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--grammar", help="explicit grammar file")
    source.add_argument("--random-grammar", action="store_true")
    _grammar_dims(p)
    p.add_argument("--grammar-seed", type=int, default=7)
    p.add_argument("--save-grammar")
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True, help="discbracket output")
    p.add_argument("--text", help="also write plain sentences here")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gradcheck", help="compare tape gradients with finite differences")
    _grammar_dims(p, v=10)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--ranks", type=_ranks, default=(2, 2, 2, 2))
    p.add_argument("--length", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--probes", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="time explicit and rank-space inside")
    _grammar_dims(p, m1=150, m2=150, p=450, v=1000)
    p.add_argument("--ranks", type=_ranks, default=(400, 4, 400, 4))
    p.add_argument("--lengths", type=_int_list, default=list(BENCH_LENGTHS))
    p.add_argument("--methods", type=lambda s: s.split(","), default=list(METHODS))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--max-seconds", type=float, default=60.0, help="time budget per method and length")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="TSV output")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    display.print_header(args.command)
    try:
        return args.func(args)
    except LcfrsError as e:
        log.error("command_failed", command=args.command, error=str(e), kind=type(e).__name__)
        display.print_error(str(e), e.exit_code)
        return e.exit_code
    except OSError as e:
        display.print_error(str(e), EXIT_DATA)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
