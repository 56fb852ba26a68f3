"""
Discbracket trees: bracketed text whose terminals carry their sentence position.

    (S (VP 0=a 2=c) (NP 1=b))

Labels are bare tokens and terminals are `index=word`. A bracket holding a
single terminal is a preterminal; terminals written without a bracket become
unlabeled leaves. Block structure comes from the positions, so the order of
children does not matter when reading; writing orders children by their
first position.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

from src.atomic import atomic_open
from src.config.log import get_logger
from src.errors import DiscbracketParseError
from src.grammar.trees import DiscoTree, SymbolKind, TreeBuilder, TreeNode, blocks_of_positions

log = get_logger(__name__)

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_TERMINAL = re.compile(r"^(\d+)=(.+)$")

DEFAULT_PUNCT_TAGS = ("$,", "$.", "$(", "PUNCT", "punct", "LET")


@dataclass
class _Bracket:
    label: str
    children: list = field(default_factory=list)


def _parse(line: str, line_no: int | None) -> _Bracket:
    tokens = _TOKEN.findall(line)
    pos = 0

    def fail(message: str):
        raise DiscbracketParseError(message, line_no)

    def node() -> _Bracket:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            fail("expected '('")
        pos += 1
        if pos >= len(tokens) or tokens[pos] in "()" or _TERMINAL.match(tokens[pos]):
            fail("bracket without a label")
        br = _Bracket(tokens[pos])
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                br.children.append(node())
                continue
            m = _TERMINAL.match(tokens[pos])
            if m is None:
                fail(f"expected index=word, got {tokens[pos]!r}")
            br.children.append((int(m.group(1)), m.group(2)))
            pos += 1
        if pos >= len(tokens):
            fail("unbalanced brackets: missing ')'")
        if not br.children:
            fail(f"empty bracket {br.label!r}")
        pos += 1
        return br

    root = node()
    if pos != len(tokens):
        fail("unbalanced brackets: text after the tree")
    return root


def _build(root: _Bracket, line_no: int | None) -> tuple[DiscoTree, list[str]]:
    builder = TreeBuilder()
    words: dict[int, str] = {}
    first: dict[int, int] = {}

    def terminal(label, index: int, word: str) -> int:
        if index in words:
            raise DiscbracketParseError(f"duplicate index {index}", line_no)
        words[index] = word
        nid = builder.leaf(label, index, word)
        first[nid] = index
        return nid

    def build(br: _Bracket) -> tuple[int, set[int]]:
        if len(br.children) == 1 and isinstance(br.children[0], tuple):
            index, word = br.children[0]
            return terminal(br.label, index, word), {index}
        kids, positions = [], set()
        for child in br.children:
            if isinstance(child, tuple):
                nid, pos = terminal(None, *child), {child[0]}
            else:
                nid, pos = build(child)
            kids.append(nid)
            positions |= pos
        kids.sort(key=first.__getitem__)
        nid = builder.add(TreeNode(br.label, SymbolKind.PHRASE, blocks_of_positions(positions), tuple(kids)))
        first[nid] = min(positions)
        return nid, positions

    root_id, positions = build(root)
    missing = sorted(set(range(len(positions))) - positions)
    if missing:
        raise DiscbracketParseError(f"missing index {missing[0]}", line_no)
    return builder.build(root_id), [words[i] for i in range(len(words))]


def parse_discbracket(line: str, line_no: int | None = None) -> tuple[list[str], DiscoTree]:
    """Read one tree; returns the words in position order and the tree."""
    tree, words = _build(_parse(line, line_no), line_no)
    return words, tree


def read_discbracket(path: str | Path) -> list[tuple[list[str], DiscoTree]]:
    """One tree per non-empty line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_discbracket(line, line_no))
    log.info("discbracket_read", path=str(path), trees=len(out))
    return out


def tree_to_discbracket(tree: DiscoTree, label_fn=None) -> str:
    """Canonical one-line rendering; `label_fn(node)` overrides the label text."""
    label_fn = label_fn or (lambda node: str(node.label))

    def render(nid: int) -> str:
        node = tree.node(nid)
        if node.is_leaf:
            term = f"{node.blocks[0][0]}={node.token}"
            return term if node.label is None else f"({label_fn(node)} {term})"
        kids = sorted(node.children, key=lambda c: tree.node(c).blocks[0][0])
        return f"({label_fn(node)} " + " ".join(render(c) for c in kids) + ")"

    return render(tree.root)


def write_discbracket(path: str | Path, trees, label_fn=None) -> None:
    with atomic_open(path, "w") as fh:
        for tree in trees:
            fh.write(tree_to_discbracket(tree, label_fn) + "\n")


def strip_punctuation(tree: DiscoTree, tags=DEFAULT_PUNCT_TAGS) -> DiscoTree | None:
    """Remove preterminals tagged as punctuation and renumber positions.

    Constituents left empty are removed; returns None when nothing remains.
    """
    tags = set(tags)
    kept = sorted(
        leaf.blocks[0][0] for leaf in tree.leaves() if not (leaf.label is not None and leaf.label in tags)
    )
    if len(kept) == tree.length:
        return tree
    renumber = {old: new for new, old in enumerate(kept)}
    builder = TreeBuilder()

    def copy(nid: int) -> tuple[int | None, set[int]]:
        node = tree.node(nid)
        if node.is_leaf:
            old = node.blocks[0][0]
            if old not in renumber:
                return None, set()
            return builder.leaf(node.label, renumber[old], node.token), {renumber[old]}
        kids, positions = [], set()
        for c in node.children:
            kid, pos = copy(c)
            if kid is not None:
                kids.append(kid)
                positions |= pos
        if not kids:
            return None, set()
        return builder.add(TreeNode(node.label, node.kind, blocks_of_positions(positions), tuple(kids))), positions

    root, _ = copy(tree.root)
    return None if root is None else builder.build(root)
