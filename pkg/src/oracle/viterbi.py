"""Max-product variant of the explicit inside algorithm, with backpointers."""

import numpy as np

from src.errors import NoParseError
from src.grammar.core import ExplicitGrammar
from src.grammar.trees import DiscoTree, RuleTag, SymbolKind, TreeBuilder
from src.oracle.inside import check_sentence


def _logs(array: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(array)


class _Cell:
    """Best score per symbol plus the candidate that produced it."""

    def __init__(self, size: int):
        self.score = np.full(size, -np.inf)
        self.back: list = [None] * size

    def offer(self, rule: np.ndarray, left: np.ndarray, right: np.ndarray, tag: RuleTag, split: tuple) -> None:
        # candidates arrive in tie-break order, so only strictly better ones replace
        total = rule + left[None, :, None] + right[None, None, :]
        flat = total.reshape(total.shape[0], -1)
        if flat.shape[1] == 0:
            return
        best = flat.argmax(axis=1)
        width = total.shape[2]
        for a, idx in enumerate(best):
            value = flat[a, idx]
            if value > self.score[a]:
                self.score[a] = value
                self.back[a] = (tag, split, int(idx // width), int(idx % width))


def viterbi_explicit(grammar: ExplicitGrammar, sentence) -> tuple[DiscoTree, float]:
    """Most probable derivation and its log-probability.

    Ties go to the lower rule tag order, then the lower split point.
    Raises NoParseError when no derivation has positive probability.
    """
    d = grammar.dims
    words = check_sentence(sentence, d.v)
    ell = len(words)
    if ell < 2:
        raise NoParseError(f"no derivation yields a sentence of length {ell}")
    m1, m2, m = d.m1, d.m2, d.m
    lC1, lD1, lC2 = _logs(grammar.C1), _logs(grammar.D1), _logs(grammar.C2)
    lD2 = [_logs(grammar.D2[..., k]) for k in range(4)]
    lQ = _logs(grammar.Q)

    cells1: dict[tuple[int, int], np.ndarray] = {}
    back1: dict[tuple[int, int], list] = {}
    cells2: dict[tuple[int, int, int, int], _Cell] = {}

    def m_scores(i: int, j: int) -> np.ndarray:
        return cells1[(i, j)]

    for i, w in enumerate(words):
        score = np.full(m, -np.inf)
        score[m1:] = lQ[:, w]
        cells1[(i, i + 1)] = score

    for w in range(2, ell + 1):
        for i in range(ell - w + 1):
            j = i + w
            cell = _Cell(m1)
            for k in range(i + 1, j):
                cell.offer(lC1, m_scores(i, k), m_scores(k, j), RuleTag.R1A, (k,))
            if m2:
                for k1 in range(i + 1, j - 1):
                    for k2 in range(k1 + 1, j):
                        cell.offer(lD1, m_scores(k1, k2), cells2[(i, k1, k2, j)].score, RuleTag.R2A, (k1, k2))
            score = np.full(m, -np.inf)
            score[:m1] = cell.score
            cells1[(i, j)] = score
            back1[(i, j)] = cell.back

        if not m2:
            continue
        for a in range(1, w):
            b = w - a
            for i in range(ell - w):
                j = i + a
                for mm in range(j + 1, ell - b + 1):
                    n = mm + b
                    cell = _Cell(m2)
                    cell.offer(lC2, m_scores(i, j), m_scores(mm, n), RuleTag.R1B, ())
                    for k in range(i + 1, j):
                        cell.offer(lD2[0], m_scores(i, k), cells2[(k, j, mm, n)].score, RuleTag.R2B, (k,))
                    for k in range(i + 1, j):
                        cell.offer(lD2[1], m_scores(k, j), cells2[(i, k, mm, n)].score, RuleTag.R2C, (k,))
                    for k in range(mm + 1, n):
                        cell.offer(lD2[2], m_scores(mm, k), cells2[(i, j, k, n)].score, RuleTag.R2D, (k,))
                    for k in range(mm + 1, n):
                        cell.offer(lD2[3], m_scores(k, n), cells2[(i, j, mm, k)].score, RuleTag.R2E, (k,))
                    cells2[(i, j, mm, n)] = cell

    with np.errstate(divide="ignore"):
        goal = np.log(grammar.s) + cells1[(0, ell)][:m1]
    root = int(goal.argmax())
    best = float(goal[root])
    if best == -np.inf:
        raise NoParseError("the grammar assigns zero probability to the sentence")

    builder = TreeBuilder()

    def m_child(sym: int, i: int, j: int) -> int:
        if sym >= m1:
            return builder.leaf(sym - m1, i, words[i])
        return build1(sym, i, j)

    def build1(a: int, i: int, j: int) -> int:
        tag, split, b, c = back1[(i, j)][a]
        if tag is RuleTag.R1A:
            (k,) = split
            left, right = m_child(b, i, k), m_child(c, k, j)
        else:
            k1, k2 = split
            left, right = m_child(b, k1, k2), build2(c, i, k1, k2, j)
        return builder.binary(a, SymbolKind.NT1, tag, left, right)

    def build2(a: int, i: int, j: int, mm: int, n: int) -> int:
        tag, split, b, c = cells2[(i, j, mm, n)].back[a]
        if tag is RuleTag.R1B:
            left, right = m_child(b, i, j), m_child(c, mm, n)
        else:
            (k,) = split
            if tag is RuleTag.R2B:
                left, right = m_child(b, i, k), build2(c, k, j, mm, n)
            elif tag is RuleTag.R2C:
                left, right = m_child(b, k, j), build2(c, i, k, mm, n)
            elif tag is RuleTag.R2D:
                left, right = m_child(b, mm, k), build2(c, i, j, k, n)
            else:
                left, right = m_child(b, k, n), build2(c, i, j, mm, k)
        return builder.binary(a, SymbolKind.NT2, tag, left, right)

    tree = builder.build(builder.start(build1(root, 0, ell)))
    return tree, best
