"""
Synthetic quick-start: sample a corpus from a seeded random grammar, train on it,
parse the development sentences and score them against the sampled gold trees.

Usage:
    python -m demo.quickstart --out-dir runs/quickstart
    python -m demo.quickstart --out-dir runs/quickstart --epochs 2 --train-size 500
"""

import argparse
import os

from src.config.train_config import TrainConfig
from src.corpus.baselines import baseline_trees
from src.corpus.discbracket import write_discbracket
from src.corpus.metrics import corpus_f1, evaluation_sets
from src.grammar.core import GrammarDims, normalize_random
from src.grammar.sampler import sample_corpus
from src.inference.batch import flat_tree, parse_corpus, with_tokens
from src.model.neural import NeuralParams, forward
from src.oracle.enumerate import symbol_name
from src.training.trainer import train

DIMS = GrammarDims(m1=2, m2=2, p=3, v=20)


def make_corpus(out_dir: str, train_size: int, dev_size: int, seed: int):
    """Sample train and dev sets from one random grammar and write their gold trees."""
    print(f"[QUICKSTART] Sampling {train_size} + {dev_size} sentences (grammar seed {seed})...")
    grammar = normalize_random(DIMS, seed)
    samples = sample_corpus(grammar, train_size + dev_size, seed, max_len=40)
    gold = [with_tokens(s.tree, [f"w{t}" for t in s.sentence]) for s in samples]
    write_discbracket(os.path.join(out_dir, "train.discbracket"), gold[:train_size], label_fn=symbol_name)
    write_discbracket(os.path.join(out_dir, "dev.discbracket"), gold[train_size:], label_fn=symbol_name)
    sentences = [list(s.sentence) for s in samples]
    return sentences[:train_size], sentences[train_size:], gold[train_size:]


def run(out_dir: str, epochs: int, train_size: int, dev_size: int, seed: int, workers: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    train_ids, dev_ids, dev_gold = make_corpus(out_dir, train_size, dev_size, seed)

    config = TrainConfig(max_epochs=epochs, patience=min(5, epochs), seed=seed, workers=workers)
    params = NeuralParams.xavier(DIMS, (16, 2, 16, 2), 64, seed, config.dtype)
    print(f"[QUICKSTART] Training {epochs} epochs (d=64, ranks 16/2/16/2)...")
    result = train(config, train_ids, dev_ids, params, out_dir=out_dir)
    for record in result.history:
        print(f"   epoch {record.epoch}: train NLL {record.train_nll:.3f}, dev ppl {record.dev_ppl:.3f}")

    print("[QUICKSTART] Parsing the development set with MBR decoding...")
    parsed = parse_corpus(forward(result.best_params), dev_ids, workers)
    preds = [r.tree if r.tree is not None else flat_tree(s) for r, s in zip(parsed, dev_ids)]
    golds_sets, pred_sets = evaluation_sets(dev_gold, preds)
    model_f1 = corpus_f1(golds_sets, pred_sets)
    random_sets = evaluation_sets(dev_gold, baseline_trees(dev_ids, "random", seed))
    random_f1 = corpus_f1(*random_sets)

    df1 = "n/a" if model_f1.df1 is None else f"{model_f1.df1:.1f}"
    print(f"   model  F1 {model_f1.f1:.1f}  DF1 {df1}")
    print(f"   random F1 {random_f1.f1:.1f}")
    print(f"\nDone! Checkpoints and gold trees are in {out_dir}. Parse new text with:")
    print(f"  python -m src.cli.main parse --model {os.path.join(out_dir, 'best.npm')} --input <ids.txt> --output out.discbracket")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Train and evaluate on a synthetic discontinuous corpus")
    parser.add_argument("--out-dir", required=True, help="Where corpora, checkpoints and logs go")
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--train-size", type=int, default=2000)
    parser.add_argument("--dev-size", type=int, default=200)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    run(args.out_dir, args.epochs, args.train_size, args.dev_size, args.seed, args.workers)
