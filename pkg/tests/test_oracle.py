"""Explicit inside, brute-force enumeration and Viterbi agree with each other."""

import numpy as np
import pytest

from src.errors import EnumerationRefused, InputError, NoParseError, TreeStructureError
from src.grammar.core import GrammarDims, concentrated_grammar, normalize_random
from src.grammar.trees import BINARY_TAGS, RuleTag, combine
from src.oracle.enumerate import (
    bracket,
    derivations_to_text,
    enumerate_derivations,
    read_fixture,
    score_derivation,
)
from src.oracle.inside import inside_explicit
from src.oracle.viterbi import viterbi_explicit

FANOUT1_TAGS = (RuleTag.R1A, RuleTag.R2A)


def count_by_closure(ell: int) -> int:
    """Derivation count of a grammar with one symbol per class and every rule positive.

    Items are built bottom-up by trying every rule on every pair of smaller
    items, which shares nothing with the top-down enumerator but `combine`.
    """
    nt1: dict = {}
    nt2: dict = {}
    pre = {((i, i + 1),): 1 for i in range(ell)}

    def width(blocks) -> int:
        return sum(hi - lo for lo, hi in blocks)

    for w in range(2, ell + 1):
        fan1 = dict(pre)
        for b, c in nt1.items():
            fan1[b] = fan1.get(b, 0) + c
        new1, new2 = {}, {}
        for left, left_count in fan1.items():
            for tag in BINARY_TAGS:
                rights = fan1 if tag in (RuleTag.R1A, RuleTag.R1B) else nt2
                for right, right_count in rights.items():
                    if width(left) + width(right) != w:
                        continue
                    try:
                        blocks = combine(tag, left, right)
                    except TreeStructureError:
                        continue
                    target = new1 if tag in FANOUT1_TAGS else new2
                    target[blocks] = target.get(blocks, 0) + left_count * right_count
        for b, c in new1.items():
            nt1[b] = nt1.get(b, 0) + c
        for b, c in new2.items():
            nt2[b] = nt2.get(b, 0) + c
    return nt1.get(((0, ell),), 0)


class TestExplicitInside:
    def test_concentrated_grammar_has_probability_one(self, concentrated):
        log_z, _ = inside_explicit(concentrated, [0, 0])
        assert log_z == pytest.approx(0.0, abs=1e-12)

    def test_short_sentences_have_no_derivation(self, small_grammar):
        assert inside_explicit(small_grammar, [1])[0] == -np.inf
        assert inside_explicit(small_grammar, [])[0] == -np.inf

    def test_out_of_vocabulary_id(self, small_grammar):
        with pytest.raises(InputError):
            inside_explicit(small_grammar, [0, 5])

    @pytest.mark.parametrize("ell", [2, 3, 4])
    def test_matches_enumeration(self, small_grammar, rng, ell):
        sentence = rng.integers(0, 5, size=ell).tolist()
        enumeration = enumerate_derivations(small_grammar, sentence)
        assert not enumeration.truncated
        log_z, _ = inside_explicit(small_grammar, sentence)
        assert log_z == pytest.approx(enumeration.log_total(), abs=1e-10)

    @pytest.mark.parametrize("ell", [5, 6])
    def test_matches_enumeration_on_longer_sentences(self, ell):
        grammar = normalize_random(GrammarDims(m1=1, m2=1, p=2, v=3), seed=11)
        sentence = np.random.default_rng(ell).integers(0, 3, size=ell).tolist()
        enumeration = enumerate_derivations(grammar, sentence)
        assert not enumeration.truncated
        assert inside_explicit(grammar, sentence)[0] == pytest.approx(enumeration.log_total(), abs=1e-10)

    @pytest.mark.parametrize("sentence", [[0, 0], [3, 1], [4, 2]])
    def test_two_words_closed_form(self, small_grammar, sentence):
        g, m1 = small_grammar, small_grammar.dims.m1
        w0, w1 = sentence
        z = np.einsum("a,abc,b,c->", g.s, g.C1[:, m1:, m1:], g.Q[:, w0], g.Q[:, w1])
        assert np.exp(inside_explicit(g, sentence)[0]) == pytest.approx(z, abs=1e-12)

    def test_relabeling_leaves_log_z_unchanged(self, small_grammar):
        sentence = [0, 4, 2, 1, 3]
        relabeled = small_grammar.permute([1, 0], [1, 0])
        assert inside_explicit(relabeled, sentence)[0] == pytest.approx(
            inside_explicit(small_grammar, sentence)[0], abs=1e-12
        )

    def test_extra_rule_mass_never_lowers_z(self, small_grammar):
        sentence = [1, 2, 3, 0]
        D2 = small_grammar.D2.copy()
        D2[0, 3, 1, 2] += 0.5
        heavier = small_grammar.replace(D2=D2)
        assert inside_explicit(heavier, sentence)[0] >= inside_explicit(small_grammar, sentence)[0]

    @pytest.mark.parametrize("sentence", [[0, 1], [4, 4, 4], [1, 0, 3, 2, 4]])
    def test_viterbi_is_bounded_by_log_z(self, small_grammar, sentence):
        _, best = viterbi_explicit(small_grammar, sentence)
        assert best <= inside_explicit(small_grammar, sentence)[0] + 1e-12


class TestEnumeration:
    def test_concentrated_grammar_has_one_derivation(self, concentrated):
        enumeration = enumerate_derivations(concentrated, [0, 0])
        assert len(enumeration) == 1
        (tree, lp), = enumeration
        assert lp == 0.0
        assert score_derivation(concentrated, tree) == 0.0

    def test_single_word_has_no_derivation(self, small_grammar):
        assert len(enumerate_derivations(small_grammar, [2])) == 0

    def test_refuses_long_sentences(self, small_grammar):
        with pytest.raises(EnumerationRefused):
            enumerate_derivations(small_grammar, [0] * 9)

    def test_cap_sets_truncation_flag(self, small_grammar):
        enumeration = enumerate_derivations(small_grammar, [0, 1, 2], cap=5)
        assert enumeration.truncated
        assert len(enumeration) <= 5

    @pytest.mark.parametrize("ell", [2, 3, 4, 5])
    def test_count_matches_bottom_up_closure(self, ell):
        grammar = normalize_random(GrammarDims(m1=1, m2=1, p=1, v=1), seed=0)
        enumeration = enumerate_derivations(grammar, [0] * ell)
        assert not enumeration.truncated
        assert len(enumeration) == count_by_closure(ell)

    def test_derivations_are_distinct(self, small_grammar):
        enumeration = enumerate_derivations(small_grammar, [0, 3, 1])
        texts = [bracket(tree) for tree, _ in enumeration]
        assert len(set(texts)) == len(texts)

    def test_scores_match_enumeration(self, small_grammar):
        for tree, lp in enumerate_derivations(small_grammar, [4, 0, 2]):
            assert score_derivation(small_grammar, tree) == pytest.approx(lp, abs=1e-12)

    def test_fixture_text_round_trip(self, concentrated):
        text = derivations_to_text(enumerate_derivations(concentrated, [0, 0]))
        assert read_fixture(text) == [("(S (N0:1a (T0 0=0) (T0 1=0)))", 0.0)]


class TestViterbi:
    def test_concentrated_grammar(self, concentrated):
        tree, score = viterbi_explicit(concentrated, [0, 0])
        assert score == 0.0
        assert bracket(tree) == "(S (N0:1a (T0 0=0) (T0 1=0)))"

    @pytest.mark.parametrize("sentence", [[0, 1], [2, 2, 4], [3, 0, 1, 4]])
    def test_matches_enumeration_argmax(self, small_grammar, sentence):
        tree, score = viterbi_explicit(small_grammar, sentence)
        best = max(lp for _, lp in enumerate_derivations(small_grammar, sentence))
        assert score == pytest.approx(best, abs=1e-10)
        assert score_derivation(small_grammar, tree) == pytest.approx(score, abs=1e-10)

    def test_zero_emission_is_a_no_parse(self):
        grammar = concentrated_grammar(v=2)
        with pytest.raises(NoParseError):
            viterbi_explicit(grammar, [0, 1])
        assert inside_explicit(grammar, [0, 1])[0] == -np.inf
