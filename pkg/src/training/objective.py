"""
Negative log-likelihood and its gradient.

The computation is split over two tapes:
- the grammar tape records parameters -> factors -> kernels once per batch;
- each sentence gets its own tape whose leaves are the kernels (emission
  kernels reduced to the rows of the sentence) and which records the
  rank-space inside pass.

Sentence tapes are independent, so they run on worker threads. Their kernel
gradients are summed in sentence order and then pushed through the grammar
tape in one reverse sweep.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.autodiff.tape import Node, Tape
from src.config.log import get_logger
from src.errors import InputError, LcfrsError, NoParseError
from src.inference.rank_inside import RankInside, inside_rank, sentence_kernels
from src.model.kernels import KernelSet, kernel_graph, precompute
from src.model.neural import NeuralParams, forward, forward_graph
from src.oracle.inside import check_sentence

log = get_logger(__name__)


def _ordered_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sentence_gradients(kernels: KernelSet[np.ndarray], words, m2: int) -> tuple[float, KernelSet[np.ndarray]]:
    """log Z of one sentence and its gradient with respect to every kernel.

    Emission gradients are returned for the sentence rows only ([ell x r]).
    """
    tape = Tape(recording=True)
    leaves = sentence_kernels(kernels, words).map(lambda name, value: tape.leaf(value, name=name))
    log_z = RankInside(tape, leaves, len(words), m2).run()
    grads = tape.backward({log_z: 1.0})
    return float(log_z.value), leaves.map(lambda _, node: grads[node])


@dataclass
class Loss:
    value: float
    log_z: list[float]
    tape: Tape
    leaves: dict[str, Node]
    kernel_nodes: KernelSet[Node]
    kernel_grads: KernelSet[np.ndarray]

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradient of the loss with respect to every parameter."""
        seeds = {node: grad for (_, node), (_, grad) in zip(self.kernel_nodes.items(), self.kernel_grads.items())}
        grads = self.tape.backward(seeds)
        return {name: grads[leaf] for name, leaf in self.leaves.items()}


def loss(params: NeuralParams, batch, workers: int = 1) -> Loss:
    """Mean negative log-likelihood of `batch` with everything needed for the gradient.

    Raises InputError for sentences shorter than 2 and NoParseError naming the
    first sentence whose log Z is -inf.
    """
    sentences = [check_sentence(s, params.dims.v) for s in batch]
    if not sentences:
        raise InputError("empty batch")
    for index, words in enumerate(sentences):
        if len(words) < 2:
            raise InputError(f"batch sentence {index} has length {len(words)}; training needs length >= 2")

    tape = Tape(recording=True)
    leaves, factors = forward_graph(tape, params)
    kernel_nodes = kernel_graph(factors, params.dims.m1)
    kernels = kernel_nodes.map(lambda _, node: node.value)

    results = _ordered_map(lambda words: sentence_gradients(kernels, words, params.dims.m2), sentences, workers)

    weight = -1.0 / len(sentences)
    totals = kernels.map(lambda _, value: np.zeros_like(value))
    log_zs = []
    for index, (words, (log_z, grads)) in enumerate(zip(sentences, results)):
        if not math.isfinite(log_z):
            raise NoParseError(f"batch sentence {index} has log Z = {log_z}")
        log_zs.append(log_z)
        rows = np.asarray(words, dtype=np.intp)
        for (name, total), (_, g) in zip(totals.items(), grads.items()):
            if name.startswith("emit"):
                np.add.at(total, rows, weight * g)
            else:
                total += weight * g

    value = -float(np.mean(log_zs))
    return Loss(value, log_zs, tape, leaves, kernel_nodes, totals)


def loss_value(params: NeuralParams, batch) -> float:
    """Mean negative log-likelihood without recording anything."""
    fg = forward(params)
    kernels = precompute(fg)
    log_zs = [inside_rank(kernels, fg, s)[0] for s in batch]
    return -float(np.mean(log_zs))


@dataclass
class CorpusNll:
    total_nll: float
    tokens: int
    sentences: int
    excluded: int

    @property
    def perplexity(self) -> float:
        return math.exp(self.total_nll / self.tokens) if self.tokens else math.nan

    @property
    def mean_nll(self) -> float:
        return self.total_nll / self.sentences if self.sentences else math.nan


def corpus_nll(params: NeuralParams, corpus, workers: int = 1) -> CorpusNll:
    """Summed NLL over parseable sentences; the rest are excluded and counted."""
    fg = forward(params)
    kernels = precompute(fg)

    def score(sentence) -> float:
        try:
            return inside_rank(kernels, fg, sentence)[0]
        except LcfrsError:
            return -math.inf

    sentences = list(corpus)
    log_zs = _ordered_map(score, sentences, workers)
    total, tokens, used = 0.0, 0, 0
    for sentence, log_z in zip(sentences, log_zs):
        if not math.isfinite(log_z):
            continue
        total -= log_z
        tokens += len(sentence)
        used += 1
    excluded = len(sentences) - used
    if excluded:
        log.warning("perplexity_excluded", excluded=excluded, sentences=len(sentences))
    return CorpusNll(total, tokens, used, excluded)


def perplexity(params: NeuralParams, corpus, workers: int = 1) -> float:
    """Per-token perplexity exp(sum NLL / sum tokens)."""
    return corpus_nll(params, corpus, workers).perplexity
