import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_corpus
from memekit.corpus import (
    CorpusError,
    compute_stats,
    filter_corpus,
    load_corpus,
    save_corpus,
    split_corpus,
)


class TestLoad:
    def test_loads_manifest_pair(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir)
        assert corpus.counts == (2, 4)

    def test_file_path_uses_sibling_templates(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir / "memes.jsonl")
        assert corpus.counts == (2, 4)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CorpusError, match="not found"):
            load_corpus(tmp_path)

    def test_malformed_row_reports_line(self, small_corpus_dir):
        with (small_corpus_dir / "memes.jsonl").open("a") as fh:
            fh.write("{not valid json\n")
        with pytest.raises(CorpusError, match="line 5"):
            load_corpus(small_corpus_dir)

    def test_missing_field_reports_line(self, small_corpus_dir):
        with (small_corpus_dir / "memes.jsonl").open("a") as fh:
            fh.write(json.dumps({"meme_id": "m9", "template_id": "t1"}) + "\n")
        with pytest.raises(CorpusError, match="line 5.*title"):
            load_corpus(small_corpus_dir)

    def test_dangling_template_names_meme(self, small_corpus_dir):
        with (small_corpus_dir / "memes.jsonl").open("a") as fh:
            fh.write(json.dumps({
                "meme_id": "m9", "template_id": "ghost", "title": "x",
                "image": "m9.png", "embedded_text": "y",
            }) + "\n")
        with pytest.raises(CorpusError, match="m9.*ghost"):
            load_corpus(small_corpus_dir)

    def test_duplicate_meme_id(self, small_corpus_dir):
        with (small_corpus_dir / "memes.jsonl").open("a") as fh:
            fh.write(json.dumps({
                "meme_id": "m1", "template_id": "t1", "title": "x",
                "image": "m9.png", "embedded_text": "y",
            }) + "\n")
        with pytest.raises(CorpusError, match="duplicate meme_id 'm1'"):
            load_corpus(small_corpus_dir)

    def test_round_trip(self, small_corpus_dir, tmp_path):
        corpus = load_corpus(small_corpus_dir)
        out = tmp_path / "copy"
        save_corpus(corpus, out)
        again = load_corpus(out)
        assert again == corpus


class TestFilter:
    def test_template_below_min_instances_removed(self):
        corpus = build_corpus({
            "a": [(f"a{i}", f"title {i}", "some embedded words") for i in range(149)],
            "b": [(f"b{i}", f"title {i}", "some embedded words") for i in range(150)],
        })
        filtered = filter_corpus(corpus, min_instances=150, min_text_tokens=1,
                                 top_k_templates=None)
        assert [t.template_id for t in filtered.templates] == ["b"]

    def test_title_equal_to_template_name_disqualifies(self):
        corpus = build_corpus(
            {"a": [("a0", "Template a", "words here"), ("a1", "other", "words here")]},
        )
        filtered = filter_corpus(corpus, min_instances=2, min_text_tokens=1,
                                 top_k_templates=None)
        assert filtered.counts == (0, 0)
        # the comparison normalizes case, punctuation, and whitespace
        corpus2 = build_corpus({"a": [("a0", "  TEMPLATE: a!! ", "words here")]})
        filtered2 = filter_corpus(corpus2, min_instances=1, min_text_tokens=1,
                                  top_k_templates=None)
        assert filtered2.counts == (0, 0)

    def test_short_text_disqualifies(self):
        corpus = build_corpus({"a": [("a0", "fine title", "one two"), ("a1", "t", "x y z")]})
        filtered = filter_corpus(corpus, min_instances=2, min_text_tokens=3,
                                 top_k_templates=None)
        assert filtered.counts == (0, 0)

    def test_zero_thresholds_identity(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir)
        filtered = filter_corpus(corpus, min_instances=0, min_text_tokens=0,
                                 top_k_templates=None)
        assert filtered == corpus

    def test_top_k_rank_and_ties(self):
        corpus = build_corpus({
            "a": [(f"a{i}", f"t{i}", "w w") for i in range(3)],
            "b": [(f"b{i}", f"t{i}", "w w") for i in range(5)],
            "c": [(f"c{i}", f"t{i}", "w w") for i in range(3)],
        })
        filtered = filter_corpus(corpus, min_instances=1, min_text_tokens=1,
                                 top_k_templates=2)
        # b wins on count; a beats c on the template_id tie
        assert [t.template_id for t in filtered.templates] == ["a", "b"]

    def test_retained_template_keeps_nonqualifying_memes(self):
        corpus = build_corpus({
            "a": [("a0", "Template a", "w w"), ("a1", "other", "w w"),
                  ("a2", "other2", "w w")],
        })
        filtered = filter_corpus(corpus, min_instances=2, min_text_tokens=1,
                                 top_k_templates=None)
        assert filtered.counts == (1, 3)

    def test_idempotent(self):
        corpus = build_corpus({
            "a": [(f"a{i}", f"t{i}", "w w w") for i in range(4)],
            "b": [("b0", "Template b", "w")],
        })
        once = filter_corpus(corpus, min_instances=2, min_text_tokens=2,
                             top_k_templates=1)
        twice = filter_corpus(once, min_instances=2, min_text_tokens=2,
                              top_k_templates=1)
        assert once == twice

    @given(min_instances=st.integers(0, 6), min_tokens=st.integers(0, 5),
           top_k=st.one_of(st.none(), st.integers(0, 4)))
    @settings(max_examples=50, deadline=None)
    def test_never_grows_and_recount_holds(self, min_instances, min_tokens, top_k):
        corpus = build_corpus({
            "a": [("a0", "Template a", "one two three"), ("a1", "x", "one")],
            "b": [("b0", "y", "one two"), ("b1", "z", ""), ("b2", "w", "a b c d")],
            "c": [("c0", "Template c", "")],
        })
        filtered = filter_corpus(corpus, min_instances, min_tokens, top_k)
        assert len(filtered.templates) <= len(corpus.templates)
        assert len(filtered.memes) <= len(corpus.memes)
        from memekit.corpus import meme_qualifies
        by_id = {t.template_id: t for t in filtered.templates}
        for template in filtered.templates:
            count = sum(
                1 for m in filtered.memes
                if m.template_id == template.template_id
                and meme_qualifies(m, by_id[m.template_id], min_tokens)
            )
            assert count >= min_instances


class TestSplit:
    def test_fraction_zero_all_train(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir)
        split = split_corpus(corpus, 0.0, seed=7)
        assert set(split.split_assignment.values()) == {"train"}

    def test_stratified_counts(self):
        corpus = build_corpus({
            f"t{i:02d}": [(f"t{i:02d}-m{j}", f"title {j}", "w w") for j in range(100)]
            for i in range(50)
        })
        split = split_corpus(corpus, 0.04, seed=3)
        n_val = sum(1 for v in split.split_assignment.values() if v == "validation")
        assert n_val == 200
        per_template = {}
        for meme in corpus.memes:
            if split.split_assignment[meme.meme_id] == "validation":
                per_template[meme.template_id] = per_template.get(meme.template_id, 0) + 1
        assert all(count == 4 for count in per_template.values())

    def test_deterministic(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir)
        a = split_corpus(corpus, 0.5, seed=11)
        b = split_corpus(corpus, 0.5, seed=11)
        assert a.split_assignment == b.split_assignment

    def test_fraction_out_of_range(self, small_corpus_dir):
        corpus = load_corpus(small_corpus_dir)
        with pytest.raises(ValueError):
            split_corpus(corpus, 1.0, seed=0)
        with pytest.raises(ValueError):
            split_corpus(corpus, -0.1, seed=0)


class TestStats:
    def test_empty_corpus(self):
        stats = compute_stats(build_corpus({}))
        assert stats.n_memes == 0
        assert all(not hist for hist in stats.token_histograms.values())

    def test_token_histogram(self):
        corpus = build_corpus({
            "a": [("a0", "t", "one two"), ("a1", "t", "uno dos"),
                  ("a2", "t", "a b c d e")],
        })
        stats = compute_stats(corpus)
        assert stats.token_histograms["embedded_text"] == {2: 2, 5: 1}

    def test_device_histogram_with_annotations(self):
        corpus = build_corpus({"a": [("a0", "t", "x"), ("a1", "t", "y")]})

        class Rec:
            image_caption = "a cat"
            meme_caption = "the joke"
            literary_devices = frozenset({"irony"})

        stats = compute_stats(corpus, annotations={"a0": Rec(), "a1": Rec()})
        assert stats.device_histogram == {"irony": 2}

    @given(st.lists(st.text(alphabet="ab ", max_size=12), min_size=1, max_size=8))
    @settings(max_examples=30, deadline=None)
    def test_mass_conservation(self, texts):
        corpus = build_corpus({
            "a": [(f"a{i}", f"title {i}", text) for i, text in enumerate(texts)],
        })
        stats = compute_stats(corpus)
        for hist in stats.token_histograms.values():
            assert sum(hist.values()) == len(texts)
        assert sum(stats.per_template_counts.values()) == len(texts)
