"""
Unlabeled corpus-level evaluation.

Counts are micro-averaged over the corpus: precision = matched / predicted
and recall = matched / gold, both summed over sentences before dividing.
Scores are percentages.
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.config.log import get_logger
from src.corpus.spans import SpanSet, span_set
from src.errors import InputError
from src.grammar.trees import DiscoTree

log = get_logger(__name__)

DEFAULT_BUCKETS = (10, 20, 30, 40)
EVAL_MAX_LEN = 40


@dataclass
class Counts:
    matched: int = 0
    predicted: int = 0
    gold: int = 0

    def add(self, gold: frozenset, pred: frozenset) -> None:
        self.matched += len(gold & pred)
        self.predicted += len(pred)
        self.gold += len(gold)

    @property
    def precision(self) -> float:
        return 100.0 * self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        if self.gold == 0 and self.predicted == 0:
            return 100.0
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class F1Score:
    overall: Counts
    discontinuous: Counts
    sentences: int

    @property
    def f1(self) -> float:
        return self.overall.f1

    @property
    def df1(self) -> float | None:
        """None when the gold side has no discontinuous span."""
        return self.discontinuous.f1 if self.discontinuous.gold else None


def _check_lengths(golds, preds) -> None:
    if len(golds) != len(preds):
        raise InputError(f"gold has {len(golds)} sentences but prediction has {len(preds)}")


def corpus_f1(golds: list[SpanSet], preds: list[SpanSet]) -> F1Score:
    _check_lengths(golds, preds)
    overall, disc = Counts(), Counts()
    for g, p in zip(golds, preds):
        overall.add(g.spans, p.spans)
        disc.add(g.discontinuous, p.discontinuous)
    return F1Score(overall, disc, len(golds))


def recall_by_label(golds: list[SpanSet], preds: list[SpanSet], discontinuous_only: bool = False) -> dict[str, float]:
    """Share of each gold label's spans that appear (unlabeled) in the prediction."""
    _check_lengths(golds, preds)
    found: dict[str, int] = {}
    total: dict[str, int] = {}
    for g, p in zip(golds, preds):
        predicted = p.spans
        for span, label in g.labeled:
            if discontinuous_only and len(span) != 4:
                continue
            total[label] = total.get(label, 0) + 1
            found[label] = found.get(label, 0) + (span in predicted)
    return {label: 100.0 * found[label] / total[label] for label in sorted(total)}


def f1_by_length(golds: list[SpanSet], preds: list[SpanSet], lengths=None,
                 buckets=DEFAULT_BUCKETS) -> dict[int, F1Score]:
    """Corpus F1 over sentences of length <= each bucket bound."""
    _check_lengths(golds, preds)
    lengths = [g.length for g in golds] if lengths is None else list(lengths)
    out = {}
    for bound in buckets:
        keep = [i for i, n in enumerate(lengths) if n <= bound]
        out[bound] = corpus_f1([golds[i] for i in keep], [preds[i] for i in keep])
    return out


def predicted_discontinuity_rate(preds: list[SpanSet]) -> float:
    """Share of predicted non-trivial spans that are discontinuous."""
    disc = sum(len(p.discontinuous) for p in preds)
    total = sum(len(p) for p in preds)
    return disc / total if total else 0.0


@dataclass
class SeedSummary:
    mean: float
    std: float
    max: float
    n: int


def summarize_seeds(scores) -> SeedSummary:
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size == 0:
        raise InputError("no scores to summarize")
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return SeedSummary(float(values.mean()), std, float(values.max()), int(values.size))


def evaluation_sets(gold_trees: list[DiscoTree], pred_trees: list[DiscoTree],
                    max_len: int = EVAL_MAX_LEN) -> tuple[list[SpanSet], list[SpanSet]]:
    """Span sets of sentence pairs no longer than `max_len`; longer pairs are skipped."""
    _check_lengths(gold_trees, pred_trees)
    golds, preds = [], []
    for index, (g, p) in enumerate(zip(gold_trees, pred_trees)):
        if g.length != p.length:
            raise InputError(f"sentence {index}: gold has {g.length} words, prediction {p.length}")
        if g.length > max_len:
            continue
        golds.append(span_set(g))
        preds.append(span_set(p))
    skipped = len(gold_trees) - len(golds)
    dropped = sum(g.dropped for g in golds)
    log.info("evaluation_sets", sentences=len(golds), skipped_long=skipped, high_fanout_dropped=dropped)
    return golds, preds


def _fmt(value: float | None) -> float | str:
    return "n/a" if value is None or (isinstance(value, float) and math.isnan(value)) else round(value, 2)


def metrics_table(score: F1Score, by_length: dict[int, F1Score] | None = None) -> pd.DataFrame:
    """One row per scope (all sentences, then each length bucket)."""
    rows = [("all", score)] + [(f"<={b}", s) for b, s in (by_length or {}).items()]
    return pd.DataFrame(
        {
            "scope": [name for name, _ in rows],
            "sentences": [s.sentences for _, s in rows],
            "precision": [_fmt(s.overall.precision) for _, s in rows],
            "recall": [_fmt(s.overall.recall) for _, s in rows],
            "f1": [_fmt(s.f1) for _, s in rows],
            "df1": [_fmt(s.df1) for _, s in rows],
        }
    )
