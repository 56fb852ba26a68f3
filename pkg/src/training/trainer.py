"""
Curriculum training loop with early stopping and resumable checkpoints.

Epoch e trains on sentences of length <= config.curriculum_len(e), shuffled
by a generator seeded from (seed, e) so that a resumed run sees the same
batches. After every epoch the development metric decides whether the
parameters become the new best; training stops once more than `patience`
epochs in a row fail to improve, or at max_epochs.

Files written to out_dir (all atomically):
- last.npm       parameters, Adam state and loop counters after the latest epoch
- best.npm       parameters of the best epoch so far
- train_log.tsv  one row per epoch
"""

import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from src.atomic import atomic_open
from src.config.log import get_logger
from src.config.train_config import TrainConfig
from src.corpus.metrics import corpus_f1, evaluation_sets
from src.errors import ConfigError
from src.inference.batch import flat_tree, parse_corpus
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.neural import NeuralParams, forward
from src.training.objective import corpus_nll, loss
from src.training.optim import AdamState, adam_step

log = get_logger(__name__)

LAST = "last.npm"
BEST = "best.npm"
TRAIN_LOG = "train_log.tsv"


@dataclass
class EpochRecord:
    epoch: int
    curriculum_len: int
    train_nll: float
    train_ppl: float
    dev_ppl: float
    dev_f1: float
    wall_seconds: float


@dataclass
class TrainResult:
    params: NeuralParams
    best_params: NeuralParams
    best_epoch: int
    history: list[EpochRecord]
    stop_reason: str


def drop_short(corpus, name: str) -> list:
    """Sentences of length >= 2; the grammar derives nothing shorter."""
    kept = [list(s) for s in corpus if len(s) >= 2]
    if len(kept) != len(corpus):
        log.warning("short_sentences_dropped", corpus=name, dropped=len(corpus) - len(kept))
    return kept


class Trainer:
    """Owns the parameters and optimizer state of one training run."""

    def __init__(self, config: TrainConfig, train_corpus, dev_corpus, params: NeuralParams,
                 out_dir: str | Path | None = None, dev_gold=None, vocab: list[str] | None = None):
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.vocab = vocab
        self.dev_gold = dev_gold
        if config.early_stop_metric == "f1" and dev_gold is None:
            raise ConfigError("early_stop_metric=f1 needs gold development trees")
        if dev_gold is not None:
            # gold trees stay aligned with their sentences, so short pairs go together
            pairs = [(s, t) for s, t in zip(dev_corpus, dev_gold) if len(s) >= 2]
            self.dev = [list(s) for s, _ in pairs]
            self.dev_gold = [t for _, t in pairs]
        else:
            self.dev = drop_short(list(dev_corpus), "dev")
        self.train = drop_short(list(train_corpus), "train")

        self.params = params.astype(config.dtype)
        self.adam = AdamState.zeros(self.params)
        self.best_params = self.params
        self.epoch = 0
        self.best_metric: float | None = None
        self.best_epoch = 0
        self.bad_epochs = 0
        self.history: list[EpochRecord] = []
        self.running = False

    @classmethod
    def resume(cls, config: TrainConfig, train_corpus, dev_corpus, out_dir: str | Path, dev_gold=None) -> "Trainer":
        """Continue a run from out_dir/last.npm and its training log."""
        out_dir = Path(out_dir)
        last = load_checkpoint(out_dir / LAST)
        trainer = cls(config, train_corpus, dev_corpus, last.params, out_dir, dev_gold, last.vocab)
        trainer.params = last.params
        trainer.adam = last.adam or AdamState.zeros(last.params)
        trainer.epoch = int(last.meta["epoch"])
        trainer.best_metric = last.meta.get("best_metric")
        trainer.best_epoch = int(last.meta.get("best_epoch", 0))
        trainer.bad_epochs = int(last.meta.get("bad_epochs", 0))
        if (out_dir / BEST).exists():
            trainer.best_params = load_checkpoint(out_dir / BEST).params
        if (out_dir / TRAIN_LOG).exists():
            frame = pd.read_csv(out_dir / TRAIN_LOG, sep="\t")
            trainer.history = [EpochRecord(**row) for row in frame.to_dict(orient="records")]
        log.info("training_resumed", epoch=trainer.epoch, best_epoch=trainer.best_epoch)
        return trainer

    def stop(self) -> None:
        """Finish the current epoch, write checkpoints and return."""
        self.running = False

    def status(self) -> dict:
        return {
            "running": self.running,
            "epoch": self.epoch,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "bad_epochs": self.bad_epochs,
        }

    def _batches(self, epoch: int) -> tuple[int, list[list]]:
        max_len = self.config.curriculum_len(epoch)
        pool = [s for s in self.train if len(s) <= max_len]
        if not pool and epoch == 1:
            raise ConfigError(f"no training sentence has length <= {max_len} in the first epoch")
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(pool))
        size = self.config.batch_size
        return max_len, [[pool[i] for i in order[k:k + size]] for k in range(0, len(order), size)]

    def _dev_scores(self) -> tuple[float, float]:
        workers = self.config.workers
        dev_ppl = corpus_nll(self.params, self.dev, workers).perplexity if self.dev else math.nan
        dev_f1 = math.nan
        if self.dev_gold is not None and self.dev:
            results = parse_corpus(forward(self.params), self.dev, workers)
            preds = [r.tree if r.tree is not None else flat_tree(s) for r, s in zip(results, self.dev)]
            golds, preds = evaluation_sets(self.dev_gold, preds)
            dev_f1 = corpus_f1(golds, preds).f1
        return dev_ppl, dev_f1

    def _run_epoch(self, epoch: int) -> EpochRecord:
        started = time.perf_counter()
        max_len, batches = self._batches(epoch)
        total_nll, tokens, sentences = 0.0, 0, 0
        for batch in batches:
            result = loss(self.params, batch, self.config.workers)
            self.adam, self.params = adam_step(self.adam, self.params, result.gradients(), self.config)
            total_nll -= float(np.sum(result.log_z))
            tokens += sum(len(s) for s in batch)
            sentences += len(batch)
        dev_ppl, dev_f1 = self._dev_scores()
        return EpochRecord(
            epoch=epoch,
            curriculum_len=max_len,
            train_nll=total_nll / sentences if sentences else math.nan,
            train_ppl=math.exp(total_nll / tokens) if tokens else math.nan,
            dev_ppl=dev_ppl,
            dev_f1=dev_f1,
            wall_seconds=time.perf_counter() - started,
        )

    def _metric(self, record: EpochRecord) -> tuple[float, bool]:
        """(value, higher_is_better) of the early-stopping metric."""
        if self.config.early_stop_metric == "f1":
            return record.dev_f1, True
        if math.isnan(record.dev_ppl):
            return record.train_ppl, False
        return record.dev_ppl, False

    def _improved(self, record: EpochRecord) -> bool:
        value, higher = self._metric(record)
        if self.best_metric is None:
            return not math.isnan(value)
        return value > self.best_metric if higher else value < self.best_metric

    def _save(self, improved: bool) -> None:
        if self.out_dir is None:
            return
        meta = {
            "epoch": self.epoch,
            "best_metric": self.best_metric,
            "best_epoch": self.best_epoch,
            "bad_epochs": self.bad_epochs,
            "seed": self.config.seed,
        }
        save_checkpoint(self.out_dir / LAST, self.params, self.vocab, self.adam, meta)
        if improved:
            save_checkpoint(self.out_dir / BEST, self.params, self.vocab, meta=meta)
        frame = pd.DataFrame([asdict(r) for r in self.history], columns=list(EpochRecord.__dataclass_fields__))
        with atomic_open(self.out_dir / TRAIN_LOG, "w") as fh:
            frame.to_csv(fh, sep="\t", index=False)

    def run(self) -> TrainResult:
        if not self.train:
            raise ConfigError("training corpus has no sentence of length >= 2")
        if self.dev_gold is None and not self.dev:
            log.warning("no_dev_sentences", fallback="train_ppl")
        self.running = True
        reason = "max_epochs"
        while self.epoch < self.config.max_epochs:
            if not self.running:
                reason = "stopped"
                break
            epoch = self.epoch + 1
            record = self._run_epoch(epoch)
            self.epoch = epoch
            self.history.append(record)
            improved = self._improved(record)
            if improved:
                self.best_metric = self._metric(record)[0]
                self.best_epoch = epoch
                self.best_params = self.params
                self.bad_epochs = 0
            else:
                self.bad_epochs += 1
            self._save(improved)
            log.info("epoch_done", **asdict(record), improved=improved, bad_epochs=self.bad_epochs)
            if self.bad_epochs > self.config.patience:
                reason = "patience"
                break
        self.running = False
        log.info("training_done", epochs=self.epoch, best_epoch=self.best_epoch, reason=reason)
        return TrainResult(self.params, self.best_params, self.best_epoch, self.history, reason)


def train(config: TrainConfig, corpus_train, corpus_dev, params_init: NeuralParams,
          out_dir: str | Path | None = None, dev_gold=None, vocab: list[str] | None = None) -> TrainResult:
    return Trainer(config, corpus_train, corpus_dev, params_init, out_dir, dev_gold, vocab).run()
