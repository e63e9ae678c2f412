import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ref_bleu4, ref_chrf, ref_macro_f1, ref_rouge_l
from memekit.textmetrics import (
    MetricError,
    MetricRequest,
    STRATEGIES,
    StrategyError,
    apply_strategy,
    bleu4,
    chrf,
    macro_f1,
    rouge_l,
)

# 20-sentence probe set: paired caption-ish strings with assorted overlap.
PROBE_PAIRS = [
    ("the cat sat on the mat", "the cat sat on a mat"),
    ("a man rides a horse", "a person rides the horse"),
    ("success kid clenches his fist", "the kid pumps his fist in triumph"),
    ("not sure if tired or just bored", "unsure whether tired or simply bored"),
    ("this meme compares two choices", "the meme contrasts two options"),
    ("one does not simply walk", "one does not simply stroll"),
    ("grumpy cat hates mondays", "the grumpy cat dislikes monday"),
    ("the joke is about deadlines", "deadlines are the joke here"),
    ("an exaggerated reaction to rain", "a wildly exaggerated response to rain"),
    ("irony dripping from every word", "every word drips with irony"),
    ("completely different sentence", "nothing shared at all zx"),
    ("short", "short"),
    ("a b c d e f g", "a b c x e f g"),
    ("repeat repeat repeat repeat", "repeat repeat"),
    ("the quick brown fox jumps", "the quick brown fox jumps over"),
    ("punctuation, everywhere! right?", "punctuation everywhere right"),
    ("numbers 1 2 3 in text", "numbers 1 2 4 in text"),
    ("caption about a template", "a template caption"),
    ("x", "y"),
    ("same same same", "same same same"),
]


class TestChrf:
    def test_identical_strings(self):
        assert chrf("hello world", "hello world") == 100.0

    def test_disjoint_character_sets(self):
        assert chrf("aaa", "zzz") == 0.0

    def test_frozen_reference_value(self):
        # computed with the classic reference implementation ahead of time
        assert chrf("abcd", "abce") == pytest.approx(47.916666666666664, abs=1e-9)

    def test_empty_strings_score_zero(self):
        assert chrf("", "") == 0.0
        assert chrf("abc", "") == 0.0

    def test_probe_set_matches_reference(self):
        for pred, ref in PROBE_PAIRS:
            assert chrf(pred, ref) == pytest.approx(ref_chrf(pred, ref), abs=1e-4)

    @given(st.text(max_size=30), st.text(max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_bounded_and_matches_reference(self, pred, ref):
        score = chrf(pred, ref)
        assert 0.0 <= score <= 100.0
        assert score == pytest.approx(ref_chrf(pred, ref), abs=1e-4)


class TestRougeL:
    def test_identical_tokens(self):
        assert rouge_l("a b c", "a b c") == 1.0

    def test_no_common_token(self):
        assert rouge_l("a b", "c d") == 0.0

    def test_hand_lcs(self):
        # LCS("a b c d", "a c d e") = "a c d", P = R = 3/4
        assert rouge_l("a b c d", "a c d e") == pytest.approx(0.75)

    def test_probe_set_matches_reference(self):
        for pred, ref in PROBE_PAIRS:
            assert rouge_l(pred, ref) == pytest.approx(ref_rouge_l(pred, ref), abs=1e-4)


class TestBleu4:
    def test_identical_corpus(self):
        preds = [p for p, _ in PROBE_PAIRS]
        assert bleu4(preds, preds) == pytest.approx(1.0)

    def test_short_prediction_effective_order(self):
        # 3 tokens: no 4-grams exist, score falls back to orders 1..3
        assert bleu4(["a b c"], [["a b c"]]) == pytest.approx(1.0)

    def test_zero_overlap_is_zero(self):
        assert bleu4(["a b c d"], [["x y z w"]]) == 0.0

    def test_probe_corpus_matches_reference(self):
        preds = [p for p, _ in PROBE_PAIRS]
        refs = [[r] for _, r in PROBE_PAIRS]
        assert bleu4(preds, refs) == pytest.approx(ref_bleu4(preds, refs), abs=1e-4)
        assert bleu4(preds, refs, smooth=False) == pytest.approx(
            ref_bleu4(preds, refs, smooth=False), abs=1e-4
        )

    def test_multi_reference_clipping(self):
        preds = ["the cat sat"]
        refs = [["a cat sat", "the cat slept"]]
        assert bleu4(preds, refs) == pytest.approx(ref_bleu4(preds, refs), abs=1e-4)

    def test_smoothing_only_touches_zero_counts(self):
        preds = ["the cat sat on the mat quietly today"]
        refs = [["the cat sat on the mat quietly today ok"]]
        assert bleu4(preds, refs) == pytest.approx(bleu4(preds, refs, smooth=False))

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            bleu4(["a"], [["a"], ["b"]])


class TestMacroF1:
    UNIVERSE = ("a", "b")

    def test_perfect(self):
        assert macro_f1([{"a"}, {"b"}], [{"a"}, {"b"}], self.UNIVERSE) == 1.0

    def test_total_miss(self):
        assert macro_f1([{"b"}], [{"a"}], self.UNIVERSE) == 0.0

    def test_hand_confusion_counts(self):
        # a: tp=2 -> F1 1.0; b: fn=1 -> F1 0.0
        score = macro_f1([{"a"}, {"a"}], [{"a"}, {"a", "b"}], self.UNIVERSE)
        assert score == pytest.approx(0.5)

    def test_label_outside_universe(self):
        with pytest.raises(MetricError, match="outside universe"):
            macro_f1([{"z"}], [{"a"}], self.UNIVERSE)

    @given(st.lists(
        st.tuples(st.sets(st.sampled_from("abcd")), st.sets(st.sampled_from("abcd"))),
        min_size=1, max_size=20,
    ))
    @settings(max_examples=100, deadline=None)
    def test_matches_reference_and_permutation_invariant(self, items):
        preds = [p for p, _ in items]
        golds = [g for _, g in items]
        universe = tuple("abcd")
        score = macro_f1(preds, golds, universe)
        assert score == pytest.approx(ref_macro_f1(preds, golds, universe))
        reordered = list(reversed(items))
        assert macro_f1([p for p, _ in reordered], [g for _, g in reordered],
                        universe) == pytest.approx(score)
        # invariance under relabeling
        rename = {"a": "w", "b": "x", "c": "y", "d": "z"}
        renamed_preds = [{rename[l] for l in p} for p in preds]
        renamed_golds = [{rename[l] for l in g} for g in golds]
        assert macro_f1(renamed_preds, renamed_golds,
                        tuple("wxyz")) == pytest.approx(score)


class TestStrategies:
    def test_degenerate_single_item_all_strategies_coincide(self):
        pred, ref = "the cat sat on the mat", "the cat sat on a mat"
        scores = {}
        for strategy in STRATEGIES:
            request = MetricRequest([pred], [[ref]], strategy)
            scores[strategy] = apply_strategy(request)
        baseline = scores["multi_reference"]
        for strategy, result in scores.items():
            for metric, value in result.items():
                assert value == pytest.approx(baseline[metric]), (strategy, metric)

    def test_best_match_picks_identical_reference(self):
        request = MetricRequest(
            ["the cat sat"], [["zzz qqq www", "the cat sat"]], "best_match",
            metrics=("chrf", "rouge_l"),
        )
        scores = apply_strategy(request)
        assert scores["chrf"] == pytest.approx(100.0)
        assert scores["rouge_l"] == pytest.approx(1.0)

    def test_best_match_at_least_single_reference(self):
        preds = ["a b c", "x y"]
        refs = [["a b", "c b a"], ["x y z", "y x"]]
        best = apply_strategy(MetricRequest(preds, refs, "best_match",
                                            metrics=("rouge_l",)))["rouge_l"]
        for pick in ([0, 0], [0, 1], [1, 0], [1, 1]):
            single = apply_strategy(MetricRequest(
                preds, [[refs[0][pick[0]]], [refs[1][pick[1]]]], "multi_reference",
                metrics=("rouge_l",),
            ))["rouge_l"]
            assert best >= single - 1e-12

    def test_concatenated_references_joins_with_space(self):
        request = MetricRequest(
            ["a b c d e f"], [["a b c", "d e f"]], "concatenated_references",
            metrics=("rouge_l",),
        )
        assert apply_strategy(request)["rouge_l"] == pytest.approx(1.0)

    def test_extended_predictions_duplicates_per_reference(self):
        request = MetricRequest(
            ["a b"], [["a b", "z z"]], "extended_predictions", metrics=("rouge_l",),
        )
        # item duplicated against both references, mean of 1.0 and 0.0
        assert apply_strategy(request)["rouge_l"] == pytest.approx(0.5)

    def test_fully_concatenated_single_entry(self):
        request = MetricRequest(
            ["a b", "c d"], [["a b"], ["c d"]], "fully_concatenated",
            metrics=("rouge_l", "bleu4"),
        )
        scores = apply_strategy(request)
        assert scores["rouge_l"] == pytest.approx(1.0)
        assert scores["bleu4"] == pytest.approx(1.0)

    def test_multi_reference_rejects_single_ref_metric(self):
        request = MetricRequest(
            ["a", "b"], [["a"], ["b", "c"]], "multi_reference", metrics=("chrf",),
        )
        with pytest.raises(StrategyError, match="does not support multiple references"):
            apply_strategy(request)

    def test_unknown_strategy_rejected(self):
        with pytest.raises(StrategyError):
            MetricRequest(["a"], [["a"]], "bestest_match")

    def test_external_scorer_adapter(self):
        from memekit.textmetrics import ExternalScorer

        stub = ExternalScorer("bleurt", lambda pred, refs: 0.25 * len(refs))
        request = MetricRequest(
            ["a", "b"], [["x", "y"], ["z", "w"]], "multi_reference",
            metrics=("bleurt",), scorers={"bleurt": stub},
        )
        assert apply_strategy(request)["bleurt"] == pytest.approx(0.5)
