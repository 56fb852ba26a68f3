"""
Batch parsing: inside, marginals and MBR decoding per sentence.

Sentences are independent, so they are spread over a thread pool; the
factored grammar and kernels are shared read-only and results come back in
input order. A failing sentence produces an error entry and the batch
continues.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.config.log import get_logger
from src.config.settings import settings
from src.errors import InputError, LcfrsError
from src.grammar.trees import DiscoTree, RuleTag, SymbolKind, TreeBuilder, TreeNode
from src.inference.marginals import marginals
from src.inference.mbr import mbr_decode
from src.model.factored import FactoredGrammar
from src.model.kernels import KernelSet, precompute
from src.oracle.inside import check_sentence

log = get_logger(__name__)


@dataclass
class ParseResult:
    index: int
    length: int
    tree: DiscoTree | None = None
    log_z: float = float("nan")
    flat: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def flat_tree(words) -> DiscoTree:
    """All words directly under the root; marks sentences that were not parsed."""
    if not len(words):
        raise InputError("an empty sentence has no tree")
    builder = TreeBuilder()
    leaves = [builder.leaf(None, i, w) for i, w in enumerate(words)]
    root = TreeNode("S", SymbolKind.START, ((0, len(words)),), tuple(leaves), RuleTag.START)
    return builder.build(builder.add(root))


def with_tokens(tree: DiscoTree, words) -> DiscoTree:
    """Copy of `tree` whose leaf at position i carries words[i]."""
    nodes = tuple(
        TreeNode(n.label, n.kind, n.blocks, n.children, n.rule_tag, words[n.blocks[0][0]]) if n.is_leaf else n
        for n in tree.nodes
    )
    return DiscoTree(nodes, tree.root)


def parse_sentence(fg: FactoredGrammar, kernels: KernelSet[np.ndarray], sentence, index: int = 0,
                   max_len: int | None = None) -> ParseResult:
    words = list(sentence)
    max_len = settings.MAX_PARSE_LEN if max_len is None else max_len
    result = ParseResult(index, len(words))
    try:
        if not words:
            raise InputError("empty sentence")
        check_sentence(words, fg.dims.v)
        if len(words) < 2 or len(words) > max_len:
            result.tree, result.flat = flat_tree(words), True
            return result
        log_z, span_marginals = marginals(fg, kernels, words)
        result.log_z = log_z
        result.tree = with_tokens(mbr_decode(span_marginals), words)
    except LcfrsError as e:
        result.error = f"{type(e).__name__}: {e}"
    return result


def parse_corpus(fg: FactoredGrammar, sentences, workers: int = 1, kernels: KernelSet[np.ndarray] | None = None,
                 max_len: int | None = None) -> list[ParseResult]:
    """Parse every sentence; output order matches input order for any worker count."""
    sentences = list(sentences)
    if not sentences:
        return []
    kernels = precompute(fg) if kernels is None else kernels
    log.info("parse_started", sentences=len(sentences), workers=workers)

    def job(item):
        index, sentence = item
        return parse_sentence(fg, kernels, sentence, index, max_len)

    if workers <= 1:
        results = [job(item) for item in enumerate(sentences)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, enumerate(sentences)))

    failed = sum(1 for r in results if not r.ok)
    flat = sum(1 for r in results if r.flat)
    log.info("parse_done", sentences=len(results), failed=failed, flat=flat)
    return results


def logz_table(results: list[ParseResult]) -> pd.DataFrame:
    """Per-sentence sidecar: sentence index, length and log Z."""
    return pd.DataFrame(
        {
            "sentence_index": [r.index for r in results],
            "length": [r.length for r in results],
            "logZ": [r.log_z for r in results],
        }
    )
