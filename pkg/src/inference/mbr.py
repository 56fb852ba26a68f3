"""
Minimum Bayes risk decoding over span marginals.

CKY over continuous items [i, j] and discontinuous items [i, j, m, n] with
additive scores: a node scores its own marginal plus the best combination
of its children under the restricted rule inventory. Candidates are tried
in rule order (1a before 2a; 1b, 2b, 2c, 2d, 2e) and by ascending split
point within a rule; only a strictly better candidate replaces the current
best, so continuous analyses win ties.
"""

import numpy as np

from src.errors import InputError
from src.grammar.trees import DiscoTree, RuleTag, SymbolKind, TreeBuilder
from src.inference.marginals import SpanMarginals

MBR_LABEL = "X"


class _Best:
    def __init__(self, shape):
        self.score = np.full(shape, -np.inf)
        self.tag = np.full(shape, -1, dtype=np.int64)
        self.split = np.zeros(shape, dtype=np.int64)
        self.extra = np.zeros(shape, dtype=np.int64)

    def offer(self, candidate: np.ndarray, tag: RuleTag, split: int, extra: int = 0) -> None:
        better = candidate > self.score
        self.score = np.where(better, candidate, self.score)
        self.tag[better] = tag.order
        self.split[better] = split
        self.extra[better] = extra


def _scores(marginals: SpanMarginals):
    ell = marginals.length
    X, Y = marginals.X, marginals.Y
    s1: dict[int, np.ndarray] = {1: X[np.arange(ell), np.arange(1, ell + 1)].astype(np.float64)}
    b1: dict[int, _Best] = {}
    s2: dict[tuple[int, int], np.ndarray] = {}
    b2: dict[tuple[int, int], _Best] = {}

    for w in range(2, ell + 1):
        n = ell - w + 1
        best = _Best(n)
        for c in range(1, w):
            best.offer(s1[c][:n] + s1[w - c][c:c + n], RuleTag.R1A, c)
        for a in range(1, w - 1):
            for bw in range(1, w - a):
                blk = s2.get((a, w - a - bw))
                if blk is not None:
                    best.offer(s1[bw][a:a + n] + blk[:n, bw - 1], RuleTag.R2A, a, bw)
        i = np.arange(n)
        s1[w] = X[i, i + w] + best.score
        b1[w] = best

        if ell - w < 1:
            continue
        for a in range(1, w):
            b = w - a
            size = ell - w
            ii, gg = np.meshgrid(np.arange(size), np.arange(1, size + 1), indexing="ij")
            valid = ii + gg <= size
            mstart = np.minimum(ii + a + gg, ell - b)
            best = _Best((size, size))
            best.offer(s1[a][:size, None] + s1[b][mstart], RuleTag.R1B, 0)
            for c in range(1, a):
                best.offer(s1[c][:size, None] + s2[(a - c, b)][c:c + size, :size], RuleTag.R2B, c)
            for c in range(a - 1, 0, -1):
                best.offer(s1[c][a - c:a - c + size, None] + s2[(a - c, b)][:size, c:c + size], RuleTag.R2C, c)
            for c in range(1, b):
                best.offer(s1[c][np.minimum(ii + a + gg, ell - c)] + s2[(a, b - c)][:size, c:c + size], RuleTag.R2D, c)
            for c in range(b - 1, 0, -1):
                best.offer(s1[c][np.minimum(ii + a + gg + b - c, ell - c)] + s2[(a, b - c)][:size, :size],
                           RuleTag.R2E, c)
            y = Y[ii, np.minimum(ii + a, ell), np.minimum(ii + a + gg, ell), np.minimum(ii + a + gg + b, ell)]
            s2[(a, b)] = np.where(valid, y + best.score, -np.inf)
            b2[(a, b)] = best
    return s1, b1, s2, b2


_TAGS = {tag.order: tag for tag in RuleTag}


def mbr_decode(marginals: SpanMarginals, ell: int | None = None) -> DiscoTree:
    """Unlabeled topology maximizing the summed marginals of its spans."""
    ell = marginals.length if ell is None else ell
    if ell < 2:
        raise InputError(f"no binary tree exists for a sentence of length {ell}")
    if not (np.all(np.isfinite(marginals.X)) and np.all(np.isfinite(marginals.Y))):
        raise InputError("marginals must be finite")
    _, b1, _, b2 = _scores(marginals)
    builder = TreeBuilder()

    def cont(i: int, j: int) -> int:
        w = j - i
        if w == 1:
            return builder.leaf(None, i)
        best = b1[w]
        tag = _TAGS[int(best.tag[i])]
        split = int(best.split[i])
        if tag is RuleTag.R1A:
            left, right = cont(i, i + split), cont(i + split, j)
        else:
            a, bw = split, int(best.extra[i])
            k1, k2 = i + a, i + a + bw
            left, right = cont(k1, k2), disc(i, k1, k2, j)
        return builder.binary(MBR_LABEL, SymbolKind.NT1, tag, left, right)

    def disc(i: int, j: int, m: int, n: int) -> int:
        a, b = j - i, n - m
        best = b2[(a, b)]
        cell = (i, m - j - 1)
        tag = _TAGS[int(best.tag[cell])]
        c = int(best.split[cell])
        if tag is RuleTag.R1B:
            left, right = cont(i, j), cont(m, n)
        elif tag is RuleTag.R2B:
            left, right = cont(i, i + c), disc(i + c, j, m, n)
        elif tag is RuleTag.R2C:
            left, right = cont(j - c, j), disc(i, j - c, m, n)
        elif tag is RuleTag.R2D:
            left, right = cont(m, m + c), disc(i, j, m + c, n)
        else:
            left, right = cont(n - c, n), disc(i, j, m, n - c)
        return builder.binary(MBR_LABEL, SymbolKind.NT2, tag, left, right)

    return builder.build(builder.start(cont(0, ell)))


def topology_score(tree: DiscoTree, marginals: SpanMarginals) -> float:
    """Sum of X/Y over every non-start node of `tree`."""
    total = 0.0
    for _, node in tree.walk():
        if node.kind is SymbolKind.START:
            continue
        if len(node.blocks) == 1:
            (i, j), = node.blocks
            total += marginals.X[i, j]
        else:
            (i, j), (m, n) = node.blocks
            total += marginals.Y[i, j, m, n]
    return float(total)
