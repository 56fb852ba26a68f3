"""Evaluation spans of a tree."""

from dataclasses import dataclass, field

from src.config.log import get_logger
from src.grammar.trees import DiscoTree

log = get_logger(__name__)

Span = tuple[int, ...]


@dataclass(frozen=True)
class SpanSet:
    """Non-trivial spans of one sentence.

    Continuous spans are (i, j), discontinuous spans (i, j, m, n). Single
    words and the whole sentence are never included; nodes of fan-out above
    two are dropped and counted in `dropped`.
    """

    length: int
    continuous: frozenset[Span] = frozenset()
    discontinuous: frozenset[Span] = frozenset()
    labeled: frozenset[tuple[Span, str]] = frozenset()
    dropped: int = 0

    @property
    def spans(self) -> frozenset[Span]:
        return self.continuous | self.discontinuous

    def __len__(self) -> int:
        return len(self.continuous) + len(self.discontinuous)


def span_set(tree: DiscoTree, length: int | None = None) -> SpanSet:
    length = tree.length if length is None else length
    continuous, discontinuous, labeled = set(), set(), set()
    dropped = 0
    for node in tree.internal_nodes():
        blocks = node.blocks
        if len(blocks) > 2:
            dropped += 1
            continue
        if len(blocks) == 1:
            (i, j), = blocks
            if j - i < 2 or (i, j) == (0, length):
                continue
            span: Span = (i, j)
            continuous.add(span)
        else:
            (i, j), (m, n) = blocks
            span = (i, j, m, n)
            discontinuous.add(span)
        if node.label is not None:
            labeled.add((span, str(node.label)))
    return SpanSet(length, frozenset(continuous), frozenset(discontinuous), frozenset(labeled), dropped)


def span_sets(trees) -> list[SpanSet]:
    sets = [span_set(t) for t in trees]
    dropped = sum(s.dropped for s in sets)
    if dropped:
        log.warning("high_fanout_spans_dropped", dropped=dropped, trees=len(sets))
    return sets
