"""Rank-space inside, span marginals, MBR decoding and batch parsing."""

import itertools
from functools import lru_cache

import numpy as np
import pytest

from src.cli.bench import run_bench
from src.corpus.discbracket import tree_to_discbracket
from src.corpus.spans import span_set
from src.errors import InputError, NoParseError
from src.grammar.core import GrammarDims, normalize_random
from src.grammar.materialize import materialize
from src.grammar.trees import SymbolKind
from src.inference.batch import flat_tree, logz_table, parse_corpus, parse_sentence
from src.inference.marginals import SpanMarginals, marginals
from src.inference.mbr import mbr_decode, topology_score
from src.inference.rank_inside import inside_rank
from src.model.factored import random_factored
from src.model.kernels import precompute
from src.oracle.enumerate import enumerate_derivations
from src.oracle.inside import inside_explicit

DIMS = GrammarDims(m1=2, m2=2, p=3, v=5)

# (m1, m2, p) for the rank/explicit comparison; m2 = 0 switches the fan-out-2 rules off
RANK_GRID = list(itertools.product((1, 2, 3), (0, 1, 2, 3), (2, 3)))


def posterior_spans(grammar, sentence):
    """X and Y accumulated over every enumerated derivation, weighted by its posterior."""
    ell = len(sentence)
    enumeration = enumerate_derivations(grammar, sentence)
    assert not enumeration.truncated
    log_z = enumeration.log_total()
    X = np.zeros((ell + 1,) * 2)
    Y = np.zeros((ell + 1,) * 4)
    for tree, lp in enumeration:
        weight = np.exp(lp - log_z)
        for _, node in tree.walk():
            if node.kind is SymbolKind.START:
                continue
            if len(node.blocks) == 1:
                X[node.blocks[0]] += weight
            else:
                (i, j), (m, n) = node.blocks
                Y[i, j, m, n] += weight
    return X, Y


@lru_cache(maxsize=None)
def all_topologies(ell: int) -> tuple:
    """Every topology, read off the derivations of a one-symbol-per-class grammar."""
    grammar = normalize_random(GrammarDims(m1=1, m2=1, p=1, v=1), seed=0)
    enumeration = enumerate_derivations(grammar, [0] * ell)
    assert not enumeration.truncated
    return tuple(tree for tree, _ in enumeration)


def random_marginals(ell: int, seed: int) -> SpanMarginals:
    rng = np.random.default_rng([ell, seed])
    n = ell + 1
    return SpanMarginals(ell, rng.uniform(size=(n, n)), rng.uniform(size=(n, n, n, n)))


class TestRankInside:
    def test_concentrated_grammar(self, concentrated_fg):
        log_z, _ = inside_rank(precompute(concentrated_fg), concentrated_fg, [0, 0])
        assert log_z == pytest.approx(0.0, abs=1e-12)

    def test_short_sentence(self, small_fg):
        log_z, chart = inside_rank(precompute(small_fg), small_fg, [3])
        assert log_z == -np.inf
        assert chart.a1 == {}

    def test_out_of_vocabulary(self, small_fg):
        with pytest.raises(InputError):
            inside_rank(precompute(small_fg), small_fg, [0, 9])

    @pytest.mark.parametrize("m1, m2, p", RANK_GRID)
    def test_matches_explicit_inside(self, m1, m2, p):
        dims = GrammarDims(m1=m1, m2=m2, p=p, v=4)
        rng = np.random.default_rng([m1, m2, p])
        for seed in range(3):
            ranks = tuple(int(r) for r in rng.integers(1, 4, size=4))
            fg = random_factored(dims, ranks, seed=seed)
            kernels = precompute(fg)
            explicit = materialize(fg)
            for ell in range(2, 7):
                sentence = rng.integers(0, dims.v, size=ell).tolist()
                rank_z, _ = inside_rank(kernels, fg, sentence)
                explicit_z, _ = inside_explicit(explicit, sentence)
                assert rank_z == pytest.approx(explicit_z, abs=1e-8), (ranks, sentence)

    def test_rank_one_factors(self):
        fg = random_factored(DIMS, (1, 1, 1, 1), seed=9)
        sentence = [4, 0, 3, 1, 2, 2]
        rank_z, _ = inside_rank(precompute(fg), fg, sentence)
        assert rank_z == pytest.approx(inside_explicit(materialize(fg), sentence)[0], abs=1e-8)

    def test_float32_stays_close(self, small_fg):
        fg32 = small_fg.astype(np.float32)
        sentence = [0, 1, 2, 3, 4]
        z64, _ = inside_rank(precompute(small_fg), small_fg, sentence)
        z32, _ = inside_rank(precompute(fg32), fg32, sentence)
        assert z32 == pytest.approx(z64, abs=1e-4)


class TestMarginals:
    def test_concentrated_grammar(self, concentrated_fg):
        _, span = marginals(concentrated_fg, precompute(concentrated_fg), [0, 0])
        np.testing.assert_allclose([span.X[0, 2], span.X[0, 1], span.X[1, 2]], 1.0, atol=1e-12)
        np.testing.assert_array_equal(span.Y, 0.0)
        assert span.total() == pytest.approx(3.0)

    def test_matches_enumerated_posterior(self, small_fg):
        sentence = [1, 4, 0, 2]
        X, Y = posterior_spans(materialize(small_fg), sentence)
        _, span = marginals(small_fg, precompute(small_fg), sentence)
        np.testing.assert_allclose(span.X, X, atol=1e-6)
        np.testing.assert_allclose(span.Y, Y, atol=1e-6)

    @pytest.mark.parametrize("ell", [2, 3, 4, 5])
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_enumerated_posterior_up_to_five_words(self, ell, seed):
        # few symbols keep the derivation count within the enumeration cap
        fg = random_factored(GrammarDims(m1=1, m2=1, p=2, v=3), (2, 1, 2, 1), seed=seed)
        sentence = np.random.default_rng([ell, seed]).integers(0, 3, size=ell).tolist()
        X, Y = posterior_spans(materialize(fg), sentence)
        _, span = marginals(fg, precompute(fg), sentence)
        np.testing.assert_allclose(span.X, X, atol=1e-6)
        np.testing.assert_allclose(span.Y, Y, atol=1e-6)

    @pytest.mark.parametrize("seed", range(100))
    def test_total_is_node_count(self, seed):
        rng = np.random.default_rng(seed)
        m1, m2, p = (int(k) for k in rng.integers(1, 4, size=3))
        dims = GrammarDims(m1=m1, m2=m2, p=p, v=5)
        fg = random_factored(dims, tuple(int(r) for r in rng.integers(1, 4, size=4)), seed=seed)
        ell = int(rng.integers(2, 9))
        sentence = rng.integers(0, dims.v, size=ell).tolist()
        _, span = marginals(fg, precompute(fg), sentence)
        assert span.total() == pytest.approx(2 * ell - 1, abs=1e-5)

    def test_no_parse(self, small_fg):
        with pytest.raises(NoParseError):
            marginals(small_fg, precompute(small_fg), [2])


class TestMbr:
    def test_additive_objective_picks_the_heavier_span(self):
        X = np.zeros((4, 4))
        X[0, 2], X[1, 3] = 0.9, 0.1
        tree = mbr_decode(SpanMarginals(3, X, np.zeros((4,) * 4)))
        tree.validate()
        assert span_set(tree).continuous == {(0, 2)}

    def test_dominant_discontinuous_span(self):
        Y = np.zeros((5,) * 4)
        Y[0, 1, 2, 3] = 0.95
        tree = mbr_decode(SpanMarginals(4, np.zeros((5, 5)), Y))
        tree.validate()
        assert (0, 1, 2, 3) in span_set(tree).discontinuous

    @pytest.mark.parametrize("ell", [3, 4, 5, 6])
    @pytest.mark.parametrize("seed", range(25))
    def test_optimal_over_all_topologies(self, ell, seed):
        span = random_marginals(ell, seed)
        decoded = mbr_decode(span)
        decoded.validate()
        best = max(topology_score(tree, span) for tree in all_topologies(ell))
        assert topology_score(decoded, span) == pytest.approx(best, abs=1e-12)

    def test_two_words_have_one_topology(self):
        tree = mbr_decode(random_marginals(2, 0))
        assert [t.blocks for _, t in tree.walk() if t.kind is SymbolKind.NT1] == [((0, 2),)]
        assert len(all_topologies(2)) == 1

    def test_decodes_model_marginals(self, small_fg):
        _, span = marginals(small_fg, precompute(small_fg), [0, 1, 2, 3, 4, 0])
        tree = mbr_decode(span)
        tree.validate()
        assert tree.length == 6

    def test_refuses_single_word(self):
        with pytest.raises(InputError):
            mbr_decode(SpanMarginals(1, np.zeros((2, 2)), np.zeros((2,) * 4)))


class TestBatch:
    def test_worker_count_does_not_change_output(self, small_fg, rng):
        sentences = [rng.integers(0, DIMS.v, size=int(n)).tolist() for n in rng.integers(2, 8, size=12)]
        serial = parse_corpus(small_fg, sentences, workers=1)
        threaded = parse_corpus(small_fg, sentences, workers=4)
        assert [r.index for r in threaded] == list(range(12))
        assert [tree_to_discbracket(r.tree) for r in serial] == [tree_to_discbracket(r.tree) for r in threaded]
        assert [r.log_z for r in serial] == [r.log_z for r in threaded]

    def test_empty_input(self, small_fg):
        assert parse_corpus(small_fg, []) == []

    def test_out_of_vocabulary_entries_fail_alone(self, small_fg):
        results = parse_corpus(small_fg, [[0, 1], [0, 99, 1], [2, 3, 4]])
        assert [r.ok for r in results] == [True, False, True]
        assert results[1].tree is None
        assert results[1].error.startswith("InputError")

    def test_out_of_vocabulary_beats_the_length_limit(self, small_fg):
        long, short = parse_corpus(small_fg, [[0, 1, 99, 2], [7]], max_len=3)
        for result in (long, short):
            assert not result.ok and not result.flat
            assert result.tree is None
            assert result.error.startswith("InputError")

    def test_empty_sentence_is_an_error_entry(self, small_fg):
        results = parse_corpus(small_fg, [[0, 1], []])
        assert results[0].ok
        assert results[1].tree is None
        assert results[1].error.startswith("InputError")

    def test_flat_tree_needs_words(self):
        with pytest.raises(InputError):
            flat_tree([])

    def test_short_and_long_sentences_get_flat_trees(self, small_fg):
        kernels = precompute(small_fg)
        short = parse_sentence(small_fg, kernels, [3])
        long = parse_sentence(small_fg, kernels, [0, 1, 2, 3], max_len=3)
        assert short.flat and long.flat
        assert tree_to_discbracket(long.tree) == tree_to_discbracket(flat_tree([0, 1, 2, 3]))

    def test_leaves_carry_the_sentence(self, small_fg):
        (result,) = parse_corpus(small_fg, [[4, 3, 2]])
        assert result.tree.tokens() == [4, 3, 2]
        assert np.isfinite(result.log_z)

    def test_logz_table(self, small_fg):
        results = parse_corpus(small_fg, [[0, 1], [2]])
        frame = logz_table(results)
        assert list(frame.columns) == ["sentence_index", "length", "logZ"]
        assert frame["length"].tolist() == [2, 1]
        assert np.isnan(frame["logZ"].iloc[1])


@pytest.mark.slow
class TestPerformance:
    DIMS = GrammarDims(m1=150, m2=150, p=450, v=1000)
    RANKS = (400, 4, 400, 4)

    def test_doubling_the_length_stays_within_the_quintic_bound(self):
        fg = random_factored(self.DIMS, self.RANKS, seed=0)
        frame = run_bench(fg, lengths=(20, 40), repeats=3, seed=0, methods=("rank",)).set_index("length")
        assert frame.loc[40, "median_ms"] / frame.loc[20, "median_ms"] <= 2**5 * 1.5

    def test_rank_space_beats_explicit_inside(self):
        fg = random_factored(self.DIMS, self.RANKS, seed=0)
        frame = run_bench(fg, lengths=(30,), repeats=1, seed=0).set_index("method")
        assert frame.loc["rank", "median_ms"] < frame.loc["explicit", "median_ms"]
