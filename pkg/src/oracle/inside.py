"""
Explicit-tensor inside algorithm, the slow ground truth for every fast path.

Cells are linear mantissas; all cells of one yield size share a log-scale
(scale[w]) that is refreshed after the yield is complete, so the true
inside value of a cell of yield w is mantissa * exp(scale[w]).
Fan-out-2 cells are indexed (i, j, m, n) with i < j < m < n.
"""

from dataclasses import dataclass
import math

import numpy as np

from src.errors import InputError
from src.grammar.core import ExplicitGrammar

_PRODUCT = "abc,b,c->a"


@dataclass
class ExplicitChart:
    length: int
    alpha1: np.ndarray
    alpha2: np.ndarray
    scale: np.ndarray

    def log_inside1(self, i: int, j: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.alpha1[i, j]) + self.scale[j - i]

    def log_inside2(self, i: int, j: int, m: int, n: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.alpha2[i, j, m, n]) + self.scale[(j - i) + (n - m)]


def check_sentence(sentence, v: int) -> tuple[int, ...]:
    ids = tuple(int(w) for w in sentence)
    for pos, w in enumerate(ids):
        if not 0 <= w < v:
            raise InputError(f"terminal id {w} at position {pos} is outside the vocabulary of size {v}")
    return ids


def empty_chart(length: int, m: int, m2: int) -> ExplicitChart:
    n = length + 1
    return ExplicitChart(
        length,
        np.zeros((n, n, m)),
        np.zeros((n, n, n, n, m2)),
        np.full(length + 1, -np.inf),
    )


class _Scales:
    """Relative weights exp(scale[w1] + scale[w2] - ref) for the splits of one yield."""

    def __init__(self, scale: np.ndarray, w: int):
        sums = [scale[w1] + scale[w - w1] for w1 in range(1, w)]
        finite = [x for x in sums if np.isfinite(x)]
        self.ref = max(finite) if finite else -np.inf
        self.scale = scale
        self.w = w

    @property
    def dead(self) -> bool:
        return not np.isfinite(self.ref)

    def __call__(self, w1: int, w2: int) -> float:
        total = self.scale[w1] + self.scale[w2]
        return math.exp(total - self.ref) if np.isfinite(total) else 0.0


def inside_explicit(grammar: ExplicitGrammar, sentence) -> tuple[float, ExplicitChart]:
    """log Z of `sentence` and its chart; -inf for sentences shorter than 2."""
    d = grammar.dims
    words = check_sentence(sentence, d.v)
    ell = len(words)
    chart = empty_chart(ell, d.m, d.m2)
    if ell < 2:
        return -np.inf, chart

    m1, m2 = d.m1, d.m2
    a1, a2, scale = chart.alpha1, chart.alpha2, chart.scale
    C1, D1, C2 = grammar.C1, grammar.D1, grammar.C2
    D2 = [grammar.D2[..., k] for k in range(4)]

    for i, w in enumerate(words):
        a1[i, i + 1, m1:] = grammar.Q[:, w]
    scale[1] = 0.0

    for w in range(2, ell + 1):
        f = _Scales(scale, w)
        if f.dead:
            continue
        cells1 = []
        for i in range(ell - w + 1):
            j = i + w
            acc = np.zeros(m1)
            for k in range(i + 1, j):
                acc += f(k - i, j - k) * np.einsum(_PRODUCT, C1, a1[i, k], a1[k, j])
            if m2:
                for k1 in range(i + 1, j - 1):
                    for k2 in range(k1 + 1, j):
                        x = k2 - k1
                        acc += f(x, w - x) * np.einsum(_PRODUCT, D1, a1[k1, k2], a2[i, k1, k2, j])
            a1[i, j, :m1] = acc
            cells1.append((i, j))

        cells2 = []
        if m2:
            for a in range(1, w):
                b = w - a
                for i in range(ell - w):
                    j = i + a
                    for m in range(j + 1, ell - b + 1):
                        n = m + b
                        acc = f(a, b) * np.einsum(_PRODUCT, C2, a1[i, j], a1[m, n])
                        for k in range(i + 1, j):
                            acc += f(k - i, w - (k - i)) * np.einsum(_PRODUCT, D2[0], a1[i, k], a2[k, j, m, n])
                            acc += f(j - k, w - (j - k)) * np.einsum(_PRODUCT, D2[1], a1[k, j], a2[i, k, m, n])
                        for k in range(m + 1, n):
                            acc += f(k - m, w - (k - m)) * np.einsum(_PRODUCT, D2[2], a1[m, k], a2[i, j, k, n])
                            acc += f(n - k, w - (n - k)) * np.einsum(_PRODUCT, D2[3], a1[k, n], a2[i, j, m, k])
                        a2[i, j, m, n] = acc
                        cells2.append((i, j, m, n))

        peak = max(
            [a1[i, j, :m1].max() for i, j in cells1] + [a2[c].max() for c in cells2],
            default=0.0,
        )
        if peak > 0:
            for i, j in cells1:
                a1[i, j, :m1] /= peak
            for c in cells2:
                a2[c] /= peak
            scale[w] = f.ref + math.log(peak)

    z = float(grammar.s @ a1[0, ell, :m1])
    log_z = math.log(z) + scale[ell] if z > 0 and np.isfinite(scale[ell]) else -np.inf
    return log_z, chart
