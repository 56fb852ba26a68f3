"""
Discontinuous derivation trees.

A DiscoTree is a flat tuple of nodes addressed by integer id. Every node
records the blocks (half-open index intervals) it dominates. Fan-out-2
blocks are ordered and separated by a non-empty gap: i < j < m < n.

The yield functions of the restricted rule inventory live in `combine`, which
is shared by the sampler, the enumerator, Viterbi and tree validation.
"""

from dataclasses import dataclass
from enum import Enum

from src.errors import TreeStructureError

Block = tuple[int, int]
Blocks = tuple[Block, ...]


class SymbolKind(str, Enum):
    START = "start"
    NT1 = "nt1"
    NT2 = "nt2"
    PRETERMINAL = "pre"
    # Treebank constituent of arbitrary fan-out (gold trees only)
    PHRASE = "phrase"


class RuleTag(str, Enum):
    START = "start"
    R1A = "1a"
    R1B = "1b"
    R2A = "2a"
    R2B = "2b"
    R2C = "2c"
    R2D = "2d"
    R2E = "2e"
    EMIT = "emit"

    @property
    def order(self) -> int:
        return _TAG_ORDER[self]


_TAG_ORDER = {tag: i for i, tag in enumerate(RuleTag)}

# Variant axis of D2 and the rows of P, in this order everywhere.
D2_VARIANTS: tuple[RuleTag, ...] = (RuleTag.R2B, RuleTag.R2C, RuleTag.R2D, RuleTag.R2E)

BINARY_TAGS: tuple[RuleTag, ...] = (
    RuleTag.R1A, RuleTag.R1B, RuleTag.R2A, RuleTag.R2B, RuleTag.R2C, RuleTag.R2D, RuleTag.R2E,
)


def _check_blocks(blocks: Blocks) -> None:
    if len(blocks) not in (1, 2):
        raise TreeStructureError(f"fan-out must be 1 or 2, got blocks {blocks}")
    for lo, hi in blocks:
        if lo >= hi:
            raise TreeStructureError(f"empty block in {blocks}")
    if len(blocks) == 2 and not blocks[0][1] < blocks[1][0]:
        raise TreeStructureError(f"fan-out-2 blocks must be separated by a gap: {blocks}")


def combine(tag: RuleTag, b: Blocks, c: Blocks) -> Blocks:
    """Apply the yield function of a binary rule to the blocks of B and C.

    Raises TreeStructureError when the child blocks cannot be arranged by the rule.
    """
    def need(cond: bool) -> None:
        if not cond:
            raise TreeStructureError(f"rule {tag.value} cannot combine {b} and {c}")

    if tag in (RuleTag.R1A, RuleTag.R1B):
        need(len(b) == 1 and len(c) == 1)
        (i, k), (k2, j) = b[0], c[0]
        if tag is RuleTag.R1A:
            need(k == k2)
            return ((i, j),)
        need(k < k2)
        return ((i, k), (k2, j))

    need(len(b) == 1 and len(c) == 2)
    x = b[0]
    y, z = c
    if tag is RuleTag.R2A:
        need(y[1] == x[0] and x[1] == z[0])
        return ((y[0], z[1]),)
    if tag is RuleTag.R2B:
        need(x[1] == y[0])
        return ((x[0], y[1]), z)
    if tag is RuleTag.R2C:
        need(y[1] == x[0] and x[1] < z[0])
        return ((y[0], x[1]), z)
    if tag is RuleTag.R2D:
        need(x[1] == z[0] and y[1] < x[0])
        return (y, (x[0], z[1]))
    if tag is RuleTag.R2E:
        need(z[1] == x[0])
        return (y, (z[0], x[1]))
    raise TreeStructureError(f"{tag.value} is not a binary rule")


def blocks_of_positions(positions) -> Blocks:
    """Group sorted word positions into maximal contiguous blocks."""
    ordered = sorted(set(positions))
    if not ordered:
        return ()
    blocks = []
    start = prev = ordered[0]
    for pos in ordered[1:]:
        if pos != prev + 1:
            blocks.append((start, prev + 1))
            start = pos
        prev = pos
    blocks.append((start, prev + 1))
    return tuple(blocks)


@dataclass(frozen=True)
class TreeNode:
    label: int | str | None
    kind: SymbolKind
    blocks: Blocks
    children: tuple[int, ...] = ()
    rule_tag: RuleTag | None = None
    # terminal id (derivations) or word string (treebank) on leaves
    token: int | str | None = None

    @property
    def fan_out(self) -> int:
        return len(self.blocks)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class DiscoTree:
    nodes: tuple[TreeNode, ...]
    root: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    @property
    def length(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    def leaves(self) -> list[TreeNode]:
        """Leaves in sentence order."""
        return sorted((n for n in self.nodes if n.is_leaf), key=lambda n: n.blocks[0][0])

    def tokens(self) -> list[int | str | None]:
        return [leaf.token for leaf in self.leaves()]

    def internal_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes if not n.is_leaf]

    def walk(self, node_id: int | None = None):
        """Pre-order traversal yielding (node_id, node)."""
        stack = [self.root if node_id is None else node_id]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            yield nid, node
            stack.extend(reversed(node.children))

    def validate(self) -> None:
        """Check block invariants; rule-tagged nodes are checked against their yield function."""
        seen = set()
        for nid, node in self.walk():
            if nid in seen:
                raise TreeStructureError(f"node {nid} reachable twice")
            seen.add(nid)
            if node.kind is not SymbolKind.PHRASE:
                _check_blocks(node.blocks)
            if node.is_leaf:
                if node.kind is not SymbolKind.PRETERMINAL:
                    raise TreeStructureError(f"leaf {nid} is not a preterminal")
                lo, hi = node.blocks[0]
                if len(node.blocks) != 1 or hi != lo + 1:
                    raise TreeStructureError(f"leaf {nid} must dominate exactly one position")
                continue
            child_blocks = [self.nodes[c].blocks for c in node.children]
            if node.rule_tag is None or node.rule_tag is RuleTag.START:
                merged = blocks_of_positions(
                    p for blocks in child_blocks for lo, hi in blocks for p in range(lo, hi)
                )
                total = sum(hi - lo for blocks in child_blocks for lo, hi in blocks)
                if merged != node.blocks or total != sum(hi - lo for lo, hi in merged):
                    raise TreeStructureError(f"node {nid} blocks {node.blocks} != union of children")
            else:
                if len(node.children) != 2:
                    raise TreeStructureError(f"binary rule node {nid} needs two children")
                if combine(node.rule_tag, *child_blocks) != node.blocks:
                    raise TreeStructureError(f"node {nid} blocks disagree with rule {node.rule_tag.value}")
        if len(seen) != len(self.nodes):
            raise TreeStructureError("tree contains unreachable nodes")


class TreeBuilder:
    """Appends nodes bottom-up and returns their ids."""

    def __init__(self):
        self._nodes: list[TreeNode] = []

    def add(self, node: TreeNode) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def leaf(self, label: int | str | None, position: int, token: int | str | None = None) -> int:
        return self.add(TreeNode(label, SymbolKind.PRETERMINAL, ((position, position + 1),),
                                 rule_tag=RuleTag.EMIT, token=token))

    def binary(self, label: int | str, kind: SymbolKind, tag: RuleTag, b: int, c: int) -> int:
        blocks = combine(tag, self._nodes[b].blocks, self._nodes[c].blocks)
        return self.add(TreeNode(label, kind, blocks, (b, c), tag))

    def start(self, child: int) -> int:
        return self.add(TreeNode("S", SymbolKind.START, self._nodes[child].blocks, (child,), RuleTag.START))

    def build(self, root: int) -> DiscoTree:
        return DiscoTree(tuple(self._nodes), root)
