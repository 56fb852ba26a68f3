"""Trivial continuous baselines: left-branching, right-branching and random binary trees."""

from typing import Literal

import numpy as np

from src.errors import InputError
from src.grammar.trees import DiscoTree, RuleTag, SymbolKind, TreeBuilder

BaselineKind = Literal["left", "right", "random"]
BASELINE_LABEL = "X"


def _tree(words, split) -> DiscoTree:
    """Binary tree over `words` where split(i, j) picks the boundary of [i, j)."""
    builder = TreeBuilder()

    def build(i: int, j: int) -> int:
        if j - i == 1:
            return builder.leaf(None, i, words[i])
        k = split(i, j)
        return builder.binary(BASELINE_LABEL, SymbolKind.NT1, RuleTag.R1A, build(i, k), build(k, j))

    return builder.build(builder.start(build(0, len(words))))


def baseline_trees(sentences, kind: BaselineKind, seed: int = 0) -> list[DiscoTree]:
    if kind not in ("left", "right", "random"):
        raise InputError(f"unknown baseline {kind!r}")
    rng = np.random.default_rng(seed)
    split = {
        "left": lambda i, j: j - 1,
        "right": lambda i, j: i + 1,
        "random": lambda i, j: int(rng.integers(i + 1, j)),
    }[kind]
    trees = []
    for index, words in enumerate(sentences):
        if len(words) == 0:
            raise InputError(f"sentence {index} is empty")
        trees.append(_tree(list(words), split))
    return trees
