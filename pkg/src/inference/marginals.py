"""Span marginals as gradients of log Z with respect to zero-valued cell probes."""

from dataclasses import dataclass

import numpy as np

from src.autodiff.tape import Tape
from src.errors import NoParseError
from src.inference.rank_inside import RankInside, constant_kernels, sentence_kernels
from src.model.factored import FactoredGrammar
from src.model.kernels import KernelSet
from src.oracle.inside import check_sentence


@dataclass
class SpanMarginals:
    length: int
    X: np.ndarray
    Y: np.ndarray

    def total(self) -> float:
        return float(self.X.sum() + self.Y.sum())


def marginals(fg: FactoredGrammar, kernels: KernelSet[np.ndarray], sentence) -> tuple[float, SpanMarginals]:
    """Posterior probability of every continuous span X[i, j] and discontinuous span Y[i, j, m, n].

    Raises NoParseError when log Z is -inf or the sentence is shorter than 2.
    """
    words = check_sentence(sentence, fg.dims.v)
    ell = len(words)
    if ell < 2:
        raise NoParseError(f"no derivation yields a sentence of length {ell}")

    tape = Tape(recording=True)
    inside = RankInside(tape, constant_kernels(tape, sentence_kernels(kernels, words)), ell, fg.dims.m2, probes=True)
    log_z_node = inside.run()
    log_z = float(log_z_node.value)
    if not np.isfinite(log_z):
        raise NoParseError("the grammar assigns zero probability to the sentence")

    grads = tape.backward({log_z_node: 1.0})
    probes = inside.probes
    n = ell + 1
    X = np.zeros((n, n))
    Y = np.zeros((n, n, n, n))

    starts = np.arange(ell)
    X[starts, starts + 1] = grads[probes.width1]
    for w, probe in probes.continuous.items():
        i = np.arange(ell - w + 1)
        X[i, i + w] = grads[probe]
    for (a, b), probe in probes.discontinuous.items():
        size = ell - a - b
        i, g = np.meshgrid(np.arange(size), np.arange(1, size + 1), indexing="ij")
        valid = i + g <= size
        i, g = i[valid], g[valid]
        Y[i, i + a, i + a + g, i + a + g + b] = grads[probe][valid]
    return log_z, SpanMarginals(ell, X, Y)
