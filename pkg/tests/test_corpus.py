"""Discbracket I/O, vocabulary, span extraction, metrics and baselines."""

import pytest

from src.corpus.baselines import baseline_trees
from src.corpus.discbracket import (
    parse_discbracket,
    read_discbracket,
    strip_punctuation,
    tree_to_discbracket,
    write_discbracket,
)
from src.corpus.metrics import (
    Counts,
    corpus_f1,
    evaluation_sets,
    f1_by_length,
    metrics_table,
    predicted_discontinuity_rate,
    recall_by_label,
    summarize_seeds,
)
from src.corpus.spans import SpanSet, span_set
from src.corpus.vocab import UNK, UNK_ID, Vocab, build_vocab, encode, load_vocab, save_vocab
from src.errors import DiscbracketParseError, InputError
from src.inference.batch import flat_tree

DISCONTINUOUS = "(S (VP 0=a 2=c) (NP 1=b))"
NESTED = "(S (NP (DT 0=the) (NN 1=dog)) (VP (VB 2=saw) (NP (DT 3=a) (NN 4=cat))) ($. 5=.))"


def spans(length: int, *items) -> SpanSet:
    cont = frozenset(s for s in items if len(s) == 2)
    disc = frozenset(s for s in items if len(s) == 4)
    return SpanSet(length, cont, disc)


class TestDiscbracket:
    def test_discontinuous_constituent(self):
        words, tree = parse_discbracket(DISCONTINUOUS)
        tree.validate()
        assert words == ["a", "b", "c"]
        vp = next(n for n in tree.nodes if n.label == "VP")
        assert vp.blocks == ((0, 1), (2, 3))
        assert span_set(tree).discontinuous == {(0, 1, 2, 3)}

    @pytest.mark.parametrize("line", [DISCONTINUOUS, NESTED, "(ROOT (X 1=b 0=a))"])
    def test_canonical_rendering_reads_back(self, line):
        _, tree = parse_discbracket(line)
        text = tree_to_discbracket(tree)
        _, again = parse_discbracket(text)
        assert tree_to_discbracket(again) == text

    def test_children_are_ordered_by_position(self):
        _, tree = parse_discbracket("(ROOT (X 1=b 0=a))")
        assert tree_to_discbracket(tree) == "(ROOT (X 0=a 1=b))"

    @pytest.mark.parametrize(
        "line, message",
        [
            ("(S 0=a", "missing ')'"),
            ("(S 0=a) (T 1=b)", "text after the tree"),
            ("(S 0=a 2=b)", "missing index 1"),
            ("(S 0=a 0=b)", "duplicate index 0"),
            ("(S a b)", "expected index=word"),
            ("(S (NP))", "empty bracket"),
        ],
    )
    def test_parse_errors_carry_the_line(self, line, message):
        with pytest.raises(DiscbracketParseError) as err:
            parse_discbracket(line, line_no=7)
        assert err.value.line_no == 7
        assert message in str(err.value)
        assert str(err.value).startswith("line 7: ")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "gold.discbracket"
        path.write_text(f"{DISCONTINUOUS}\n\n{NESTED}\n")
        trees = [tree for _, tree in read_discbracket(path)]
        assert len(trees) == 2
        write_discbracket(tmp_path / "out.discbracket", trees)
        lines = (tmp_path / "out.discbracket").read_text().splitlines()
        assert lines == [tree_to_discbracket(t) for t in trees]

    def test_error_line_numbers_count_blank_lines(self, tmp_path):
        path = tmp_path / "bad.discbracket"
        path.write_text(f"{DISCONTINUOUS}\n\n(S 0=a\n")
        with pytest.raises(DiscbracketParseError) as err:
            read_discbracket(path)
        assert err.value.line_no == 3

    def test_strip_punctuation(self):
        _, tree = parse_discbracket(NESTED)
        stripped = strip_punctuation(tree)
        stripped.validate()
        assert stripped.length == 5
        assert stripped.tokens() == ["the", "dog", "saw", "a", "cat"]

    def test_strip_renumbers_and_removes_empty_constituents(self):
        _, tree = parse_discbracket("(S ($( 0=-) (NP (DT 1=the) (NN 2=dog)) (P ($. 3=.)))")
        stripped = strip_punctuation(tree)
        assert tree_to_discbracket(stripped) == "(S (NP (DT 0=the) (NN 1=dog)))"

    def test_strip_everything(self):
        _, tree = parse_discbracket("(S ($. 0=.) ($, 1=,))")
        assert strip_punctuation(tree) is None


class TestVocab:
    def test_most_frequent_words(self):
        vocab = build_vocab([["a", "a", "b", "b", "b", "c"]], k=2)
        assert vocab.words == (UNK, "b", "a")
        assert encode(vocab, ["c", "a", "b"]) == [UNK_ID, 2, 1]

    def test_ties_break_lexicographically(self):
        vocab = build_vocab([["y", "x", "z", "x", "y"]], k=2)
        assert vocab.words == (UNK, "x", "y")

    def test_file_round_trip(self, tmp_path):
        vocab = build_vocab([["der", "Hund", "der"]])
        save_vocab(tmp_path / "vocab.txt", vocab)
        assert load_vocab(tmp_path / "vocab.txt") == vocab

    def test_unk_must_come_first(self):
        with pytest.raises(InputError):
            Vocab(("a", UNK))

    def test_empty_corpus(self):
        with pytest.raises(InputError):
            build_vocab([[]])


class TestSpans:
    def test_trivial_spans_are_excluded(self):
        _, tree = parse_discbracket(NESTED)
        result = span_set(tree)
        assert result.continuous == {(0, 2), (2, 5), (3, 5)}
        assert result.discontinuous == frozenset()
        assert ((0, 2), "NP") in result.labeled

    def test_flat_tree_has_no_spans(self):
        assert len(span_set(flat_tree(["a", "b", "c"]))) == 0


class TestMetrics:
    def test_half_matched(self):
        score = corpus_f1([spans(4, (0, 2), (2, 4))], [spans(4, (0, 2), (1, 4))])
        assert score.overall.precision == pytest.approx(50.0)
        assert score.overall.recall == pytest.approx(50.0)
        assert score.f1 == pytest.approx(50.0)
        assert score.df1 is None

    def test_identical_sets(self):
        _, tree = parse_discbracket(DISCONTINUOUS)
        gold = [span_set(tree)]
        score = corpus_f1(gold, gold)
        assert score.f1 == 100.0
        assert score.df1 == 100.0

    def test_both_empty_is_perfect(self):
        assert Counts().f1 == 100.0
        assert Counts(0, 2, 0).f1 == 0.0

    def test_micro_average_differs_from_sentence_mean(self):
        golds = [spans(4, (0, 2)), spans(8, (0, 2), (2, 4), (4, 6), (0, 4))]
        preds = [spans(4, (1, 3)), spans(8, (0, 2), (2, 4), (4, 6), (0, 4))]
        score = corpus_f1(golds, preds)
        assert score.f1 == pytest.approx(80.0)
        mean = (corpus_f1(golds[:1], preds[:1]).f1 + corpus_f1(golds[1:], preds[1:]).f1) / 2
        assert mean == pytest.approx(50.0)

    def test_mismatched_sentence_counts(self):
        with pytest.raises(InputError):
            corpus_f1([spans(2)], [])

    def test_recall_by_label(self):
        _, first = parse_discbracket("(S (NP 0=a 1=b) (VP 2=c (NP 3=d 4=e)))")
        _, second = parse_discbracket("(S (NP 0=x 1=y) 2=z)")
        golds = [span_set(first), span_set(second)]
        preds = [
            span_set(baseline_trees([list("abcde")], "right")[0]),
            span_set(baseline_trees([list("xyz")], "left")[0]),
        ]
        recall = recall_by_label(golds, preds)
        assert recall["NP"] == pytest.approx(66.7, abs=0.1)
        assert recall["VP"] == 100.0

    def test_length_buckets_are_cumulative(self):
        golds = [spans(5, (0, 2)), spans(15, (0, 2)), spans(25, (0, 2))]
        preds = [spans(5, (0, 2)), spans(15, (1, 3)), spans(25, (0, 2))]
        buckets = f1_by_length(golds, preds, buckets=(10, 20, 30))
        assert [b.sentences for b in buckets.values()] == [1, 2, 3]
        assert buckets[10].f1 == 100.0
        assert buckets[20].f1 == pytest.approx(50.0)

    def test_discontinuity_rate(self):
        preds = [spans(6, (0, 2), (0, 1, 3, 4)), spans(6, (2, 4), (1, 3))]
        assert predicted_discontinuity_rate(preds) == pytest.approx(0.25)

    def test_evaluation_sets_skip_long_sentences(self):
        short, long = flat_tree(list("ab")), flat_tree(list("abcdef"))
        golds, preds = evaluation_sets([short, long], [short, long], max_len=4)
        assert len(golds) == len(preds) == 1

    def test_evaluation_sets_check_lengths(self):
        with pytest.raises(InputError):
            evaluation_sets([flat_tree(list("ab"))], [flat_tree(list("abc"))])

    def test_seed_summary(self):
        summary = summarize_seeds([40.0, 50.0, 60.0])
        assert (summary.mean, summary.max, summary.n) == (50.0, 60.0, 3)
        assert summary.std == pytest.approx(10.0)
        with pytest.raises(InputError):
            summarize_seeds([])

    def test_metrics_table(self):
        golds = [spans(4, (0, 2), (2, 4))]
        preds = [spans(4, (0, 2), (1, 4))]
        frame = metrics_table(corpus_f1(golds, preds), f1_by_length(golds, preds, buckets=(10,)))
        assert frame["scope"].tolist() == ["all", "<=10"]
        assert frame["f1"].tolist() == [50.0, 50.0]
        assert frame["df1"].tolist() == ["n/a", "n/a"]


class TestBaselines:
    def test_left_branching(self):
        (tree,) = baseline_trees([list("abcd")], "left")
        tree.validate()
        assert span_set(tree).continuous == {(0, 2), (0, 3)}

    def test_right_branching(self):
        (tree,) = baseline_trees([list("abcd")], "right")
        assert span_set(tree).continuous == {(2, 4), (1, 4)}

    def test_random_is_seeded(self):
        sentences = [list("abcdefg")] * 5
        first = [tree_to_discbracket(t) for t in baseline_trees(sentences, "random", seed=3)]
        second = [tree_to_discbracket(t) for t in baseline_trees(sentences, "random", seed=3)]
        assert first == second

    def test_unknown_kind_and_empty_sentence(self):
        with pytest.raises(InputError):
            baseline_trees([list("ab")], "balanced")
        with pytest.raises(InputError):
            baseline_trees([[]], "left")
