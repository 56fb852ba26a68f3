"""
Brute-force derivation enumeration and scoring.

Enumeration recurses over item forms (symbol, blocks) and lists every
derivation built from positive-probability rules. It is exponential and
refuses sentences longer than the configured limit.

Fixture lines look like
    (S (N0:1a (T0 0=0) (T0 1=0)))\t0.0
with N* fan-out-1 nonterminals, D* fan-out-2 nonterminals and T* preterminals.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from src.config.settings import settings
from src.errors import EnumerationRefused, TreeStructureError
from src.grammar.core import ExplicitGrammar
from src.grammar.trees import D2_VARIANTS, DiscoTree, RuleTag, SymbolKind, TreeBuilder, TreeNode
from src.oracle.inside import check_sentence

ENUMERATION_MAX_LEN = 8


@dataclass
class Enumeration:
    derivations: list[tuple[DiscoTree, float]] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.derivations)

    def __iter__(self):
        return iter(self.derivations)

    def log_total(self) -> float:
        scores = np.array([lp for _, lp in self.derivations])
        if scores.size == 0 or not np.isfinite(scores.max()):
            return -np.inf
        top = scores.max()
        return float(top + np.log(np.exp(scores - top).sum()))


class _Cap(Exception):
    pass


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


class _Enumerator:
    # proto derivations: ("emit", t, pos, word) or (tag, label, b_proto, c_proto)

    def __init__(self, grammar: ExplicitGrammar, words: tuple[int, ...], cap: int):
        self.g = grammar
        self.words = words
        self.cap = cap
        self.memo: dict = {}

    def _bounded(self, out: list) -> None:
        if len(out) > self.cap:
            raise _Cap

    def m_items(self, sym: int, i: int, j: int) -> list:
        """Derivations of a fan-out-1 child symbol in M over [i, j)."""
        m1 = self.g.dims.m1
        if sym >= m1:
            if j != i + 1:
                return []
            lp = _log(self.g.Q[sym - m1, self.words[i]])
            return [] if lp == -math.inf else [(("emit", sym - m1, i, self.words[i]), lp)]
        return self.nt1(sym, i, j)

    def nt1(self, a: int, i: int, j: int) -> list:
        key = (1, a, i, j)
        if key in self.memo:
            return self.memo[key]
        g, m, m2 = self.g, self.g.dims.m, self.g.dims.m2
        out: list = []
        for k in range(i + 1, j):
            for b in range(m):
                for c in range(m):
                    self._pairs(out, RuleTag.R1A, a, g.C1[a, b, c], self.m_items(b, i, k), lambda c=c, k=k: self.m_items(c, k, j))
        for k1 in range(i + 1, j - 1):
            for k2 in range(k1 + 1, j):
                for b in range(m):
                    for c in range(m2):
                        self._pairs(out, RuleTag.R2A, a, g.D1[a, b, c], self.m_items(b, k1, k2),
                                    lambda c=c, k1=k1, k2=k2: self.nt2(c, i, k1, k2, j))
        self.memo[key] = out
        return out

    def nt2(self, a: int, i: int, j: int, m_: int, n: int) -> list:
        key = (2, a, i, j, m_, n)
        if key in self.memo:
            return self.memo[key]
        g, m, m2 = self.g, self.g.dims.m, self.g.dims.m2
        out: list = []
        for b in range(m):
            for c in range(m):
                self._pairs(out, RuleTag.R1B, a, g.C2[a, b, c], self.m_items(b, i, j),
                            lambda c=c: self.m_items(c, m_, n))
        for b in range(m):
            for c in range(m2):
                for k in range(i + 1, j):
                    self._pairs(out, RuleTag.R2B, a, g.D2[a, b, c, 0], self.m_items(b, i, k),
                                lambda c=c, k=k: self.nt2(c, k, j, m_, n))
                    self._pairs(out, RuleTag.R2C, a, g.D2[a, b, c, 1], self.m_items(b, k, j),
                                lambda c=c, k=k: self.nt2(c, i, k, m_, n))
                for k in range(m_ + 1, n):
                    self._pairs(out, RuleTag.R2D, a, g.D2[a, b, c, 2], self.m_items(b, m_, k),
                                lambda c=c, k=k: self.nt2(c, i, j, k, n))
                    self._pairs(out, RuleTag.R2E, a, g.D2[a, b, c, 3], self.m_items(b, k, n),
                                lambda c=c, k=k: self.nt2(c, i, j, m_, k))
        self.memo[key] = out
        return out

    def _pairs(self, out: list, tag: RuleTag, a: int, prob: float, lefts: list, rights) -> None:
        if prob <= 0 or not lefts:
            return
        rights = rights()
        lp = math.log(prob)
        for left, lpl in lefts:
            for right, lpr in rights:
                out.append(((tag, a, left, right), lp + lpl + lpr))
                self._bounded(out)


def _build(proto, builder: TreeBuilder) -> int:
    if proto[0] == "emit":
        _, t, pos, word = proto
        return builder.leaf(t, pos, word)
    tag, a, left, right = proto
    kind = SymbolKind.NT1 if tag in (RuleTag.R1A, RuleTag.R2A) else SymbolKind.NT2
    b = _build(left, builder)
    c = _build(right, builder)
    return builder.binary(a, kind, tag, b, c)


def enumerate_derivations(grammar: ExplicitGrammar, sentence, cap: int = 100_000,
                          max_len: int | None = None) -> Enumeration:
    """Every derivation of `sentence` with its log-probability.

    Args:
        grammar: Explicit grammar; rules with zero probability are skipped.
        sentence: Terminal ids.
        cap: Longest list returned; hitting it sets `truncated`.
        max_len: Refusal threshold, defaults to the configured enumeration limit.
    """
    words = check_sentence(sentence, grammar.dims.v)
    limit = settings.ENUM_MAX_LEN if max_len is None else max_len
    limit = min(limit, ENUMERATION_MAX_LEN)
    if len(words) > limit:
        raise EnumerationRefused(f"refusing to enumerate a sentence of length {len(words)} > {limit}")
    result = Enumeration()
    if len(words) < 2:
        return result

    enum = _Enumerator(grammar, words, cap)
    ell = len(words)
    try:
        for a in range(grammar.dims.m1):
            if grammar.s[a] <= 0:
                continue
            for proto, lp in enum.nt1(a, 0, ell):
                result.derivations.append((proto, lp + math.log(grammar.s[a])))
                if len(result.derivations) > cap:
                    raise _Cap
    except _Cap:
        result.truncated = True
        result.derivations = result.derivations[:cap]

    trees = []
    for proto, lp in result.derivations:
        builder = TreeBuilder()
        trees.append((builder.build(builder.start(_build(proto, builder))), lp))
    result.derivations = trees
    return result


def _m_index(grammar: ExplicitGrammar, node: TreeNode) -> int:
    if node.kind is SymbolKind.NT1:
        return int(node.label)
    if node.kind is SymbolKind.PRETERMINAL:
        return grammar.dims.m1 + int(node.label)
    raise TreeStructureError(f"{node.kind.value} node cannot fill a fan-out-1 child slot")


def _nt2_index(node: TreeNode) -> int:
    if node.kind is not SymbolKind.NT2:
        raise TreeStructureError(f"{node.kind.value} node cannot fill a fan-out-2 child slot")
    return int(node.label)


def score_derivation(grammar: ExplicitGrammar, tree: DiscoTree) -> float:
    """Sum of the log-probabilities of every rule used by `tree`."""
    tree.validate()
    total = 0.0
    for _, node in tree.walk():
        tag = node.rule_tag
        if tag is RuleTag.START:
            child = tree.node(node.children[0])
            if child.kind is not SymbolKind.NT1:
                raise TreeStructureError("start rule must rewrite to a fan-out-1 nonterminal")
            total += _log(grammar.s[int(child.label)])
        elif tag is RuleTag.EMIT:
            total += _log(grammar.Q[int(node.label), int(node.token)])
        elif tag in (RuleTag.R1A, RuleTag.R2A, RuleTag.R1B) or tag in D2_VARIANTS:
            expected = SymbolKind.NT1 if tag in (RuleTag.R1A, RuleTag.R2A) else SymbolKind.NT2
            if node.kind is not expected:
                raise TreeStructureError(f"rule {tag.value} cannot rewrite a {node.kind.value} node")
            a = int(node.label)
            b_node, c_node = (tree.node(c) for c in node.children)
            b = _m_index(grammar, b_node)
            if tag is RuleTag.R1A:
                prob = grammar.C1[a, b, _m_index(grammar, c_node)]
            elif tag is RuleTag.R1B:
                prob = grammar.C2[a, b, _m_index(grammar, c_node)]
            elif tag is RuleTag.R2A:
                prob = grammar.D1[a, b, _nt2_index(c_node)]
            else:
                prob = grammar.D2[a, b, _nt2_index(c_node), D2_VARIANTS.index(tag)]
            total += _log(prob)
        else:
            raise TreeStructureError(f"node with rule {tag} is outside the rule inventory")
    return total


def symbol_name(node: TreeNode) -> str:
    prefix = {SymbolKind.NT1: "N", SymbolKind.NT2: "D", SymbolKind.PRETERMINAL: "T"}
    if node.kind is SymbolKind.START:
        return "S"
    return f"{prefix[node.kind]}{node.label}"


def bracket(tree: DiscoTree, node_id: int | None = None) -> str:
    node = tree.node(tree.root if node_id is None else node_id)
    if node.is_leaf:
        return f"({symbol_name(node)} {node.blocks[0][0]}={node.token})"
    head = symbol_name(node)
    if node.rule_tag not in (None, RuleTag.START):
        head += f":{node.rule_tag.value}"
    children = " ".join(bracket(tree, c) for c in node.children)
    return f"({head} {children})"


def derivations_to_text(enumeration: Enumeration) -> str:
    return "".join(f"{bracket(tree)}\t{lp!r}\n" for tree, lp in enumeration)


def read_fixture(text: str) -> list[tuple[str, float]]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        tree, lp = line.rsplit("\t", 1)
        rows.append((tree, float(lp)))
    return rows
