import random

import pytest
from hypothesis import given, settings, strategies as st

from genaug.errors import ConfigError
from genaug.metrics import (
    CaptionPair,
    MeasuredResult,
    MetricReport,
    bleu4,
    cider_d,
    corpus_from_files,
    corpus_rouge_l,
    delta_percent,
    delta_table,
    make_pair,
    rouge_l,
    score_corpus,
)

from oracles import bleu4_oracle, cider_d_oracle, rouge_l_oracle


def pair(image_id, hyp, refs):
    return make_pair(image_id, hyp, refs)


def to_oracle(corpus):
    return [(list(p.hypothesis), [list(r) for r in p.references]) for p in corpus]


class TestBleu4:
    def test_identical_corpus_is_one(self):
        corpus = [
            pair("1", "a dog runs in the park", ["a dog runs in the park"]),
            pair("2", "the cat sat on a mat", ["the cat sat on a mat", "a cat sits"]),
        ]
        assert bleu4(corpus) == 1.0

    def test_disjoint_is_zero(self):
        corpus = [pair("1", "alpha beta gamma delta", ["one two three four"])]
        assert bleu4(corpus) == 0.0

    def test_single_pair_frozen_value(self):
        # Expected value computed with the independent n-gram oracle:
        # hyp/ref differ by one token; precisions 5/6, 3/5, 2/4, 1/3; BP = 1.
        corpus = [pair("1", "the cat sat on the mat", ["the cat sat on a mat"])]
        expected = 0.537284965911771
        assert abs(bleu4(corpus) - expected) < 1e-9
        assert abs(bleu4_oracle(to_oracle(corpus)) - expected) < 1e-12

    def test_empty_hypothesis_contributes_zero_counts(self):
        corpus = [
            pair("1", "", ["a dog"]),
            pair("2", "a dog runs here", ["a dog runs here"]),
        ]
        assert abs(bleu4(corpus) - bleu4_oracle(to_oracle(corpus))) < 1e-9

    def test_brevity_penalty_applied(self):
        corpus = [pair("1", "a dog runs in", ["a dog runs in the park today ok"])]
        assert bleu4(corpus) == pytest.approx(bleu4_oracle(to_oracle(corpus)), abs=1e-12)
        assert bleu4(corpus) < 1.0

    def test_empty_corpus_error(self):
        with pytest.raises(ValueError):
            bleu4([])


class TestRougeL:
    def test_identical_is_one(self):
        assert rouge_l(pair("1", "a dog runs", ["a dog runs"])) == 1.0

    def test_disjoint_is_zero(self):
        assert rouge_l(pair("1", "a b c", ["x y z"])) == 0.0

    def test_lcs3_of_4_frozen(self):
        # LCS("a b c d", "a c d e") = 3, P = R = 0.75 so F = 0.75 for any beta.
        p = pair("1", "a b c d", ["a c d e"])
        assert rouge_l(p) == pytest.approx(0.75, abs=1e-12)
        assert rouge_l_oracle(["a", "b", "c", "d"], [["a", "c", "d", "e"]]) == pytest.approx(0.75)

    def test_max_over_references(self):
        p = pair("1", "a b c d", ["x y z", "a b c d"])
        assert rouge_l(p) == 1.0

    def test_corpus_is_mean(self):
        corpus = [
            pair("1", "a b", ["a b"]),
            pair("2", "a b", ["x y"]),
        ]
        assert corpus_rouge_l(corpus) == pytest.approx(0.5)

    @given(st.data())
    def test_symmetric_for_equal_lengths(self, data):
        vocab = ["a", "b", "c", "d"]
        n = data.draw(st.integers(min_value=1, max_value=6))
        h = data.draw(st.lists(st.sampled_from(vocab), min_size=n, max_size=n))
        r = data.draw(st.lists(st.sampled_from(vocab), min_size=n, max_size=n))
        forward = rouge_l(CaptionPair("1", tuple(h), (tuple(r),)))
        backward = rouge_l(CaptionPair("1", tuple(r), (tuple(h),)))
        assert forward == pytest.approx(backward, abs=1e-12)


class TestCiderD:
    def test_self_match_disjoint_references_is_ten(self):
        corpus = [
            pair("1", "a dog runs fast", ["a dog runs fast"]),
            pair("2", "blue cars stop here", ["blue cars stop here"]),
        ]
        assert cider_d(corpus) == pytest.approx(10.0, abs=1e-12)

    def test_no_overlap_is_zero(self):
        corpus = [
            pair("1", "x y z w", ["a dog runs fast"]),
            pair("2", "u v q t", ["blue cars stop here"]),
        ]
        assert cider_d(corpus) == 0.0

    def test_three_image_toy_frozen_value(self):
        # Frozen from the independent TF-IDF oracle over this exact corpus.
        corpus = [
            pair("1", "a dog runs in the park", ["a dog runs in a park", "the dog is running"]),
            pair("2", "a cat sits on the mat", ["a cat sits on a mat"]),
            pair("3", "a bird flies over the park",
                 ["the bird flies above the park", "a bird in the sky"]),
        ]
        expected = 3.8977434239473947
        assert abs(cider_d(corpus) - expected) < 1e-9
        assert abs(cider_d_oracle(to_oracle(corpus)) - expected) < 1e-12

    def test_corpus_of_one_is_error(self):
        with pytest.raises(ValueError, match="corpus size 1"):
            cider_d([pair("1", "a b", ["a b"])])


def random_corpus(rng, n_images, vocab=("a", "b", "c", "d", "e", "f")):
    corpus = []
    for i in range(n_images):
        length = rng.randint(1, 6)
        hyp = " ".join(rng.choice(vocab) for _ in range(length))
        refs = [
            " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
            for _ in range(rng.randint(1, 3))
        ]
        corpus.append(pair(str(i), hyp, refs))
    return corpus


class TestOracleAgreement:
    def test_fifty_randomized_corpora(self):
        rng = random.Random(20240811)
        for trial in range(50):
            corpus = random_corpus(rng, rng.randint(2, 5))
            oracle_pairs = to_oracle(corpus)
            assert abs(bleu4(corpus) - bleu4_oracle(oracle_pairs)) < 1e-9, trial
            ours = corpus_rouge_l(corpus)
            ref = sum(rouge_l_oracle(h, rs) for h, rs in oracle_pairs) / len(oracle_pairs)
            assert abs(ours - ref) < 1e-9, trial
            assert abs(cider_d(corpus) - cider_d_oracle(oracle_pairs)) < 1e-9, trial

    def test_permutation_invariance(self):
        rng = random.Random(7)
        corpus = random_corpus(rng, 5)
        shuffled = corpus[::-1]
        assert bleu4(corpus) == pytest.approx(bleu4(shuffled), abs=1e-12)
        assert corpus_rouge_l(corpus) == pytest.approx(corpus_rouge_l(shuffled), abs=1e-12)
        assert cider_d(corpus) == pytest.approx(cider_d(shuffled), abs=1e-12)


class TestDeltaTable:
    def test_positive_delta_format(self):
        assert delta_percent(0.700, 0.713) == "+1.3%"

    def test_zero_delta_format(self):
        assert delta_percent(0.5, 0.5) == "+0.0%"

    def test_negative_delta_format(self):
        assert delta_percent(0.700, 0.682) == "-1.8%"

    def test_table_rows(self):
        baseline = MeasuredResult("baseline", "toy", "accuracy", 0.700)
        rows = delta_table(
            baseline,
            [
                MeasuredResult("aug", "toy", "accuracy", 0.713),
                MeasuredResult("adv", "toy", "accuracy", 0.682),
            ],
        )
        assert [r["delta"] for r in rows] == ["+1.3%", "-1.8%"]

    def test_mismatched_dataset_error(self):
        baseline = MeasuredResult("baseline", "toy", "accuracy", 0.7)
        with pytest.raises(ConfigError, match="cannot compare"):
            delta_table(baseline, [MeasuredResult("x", "other", "accuracy", 0.8)])


class TestReportAndFiles:
    def test_score_corpus_report(self):
        corpus = [
            pair("1", "a dog runs fast", ["a dog runs fast"]),
            pair("2", "blue cars stop here", ["blue cars stop here"]),
        ]
        report = score_corpus(corpus)
        assert report == MetricReport(bleu4=1.0, rouge_l=1.0, cider_d=10.0, n=2)
        assert report.to_csv_row() == "2,1.000000,1.000000,10.000000"

    def test_report_range_validation(self):
        with pytest.raises(ValueError):
            MetricReport(bleu4=1.5, rouge_l=0.0, cider_d=0.0, n=1)

    def test_corpus_from_files(self, tmp_path):
        hyp = tmp_path / "hyp.jsonl"
        ref = tmp_path / "ref.jsonl"
        hyp.write_text(
            '{"image_id": "1", "sentence": "a dog runs"}\n'
            '{"image_id": "2", "sentence": "a cat sits"}\n'
        )
        ref.write_text(
            '{"image_id": "1", "sentence": "a dog runs"}\n'
            '{"image_id": "1", "sentence": "the dog is running"}\n'
            '{"image_id": "2", "sentence": "a cat sits"}\n'
        )
        corpus = corpus_from_files(hyp, ref)
        assert len(corpus) == 2
        assert len(corpus[0].references) == 2

    def test_missing_references_error(self, tmp_path):
        hyp = tmp_path / "hyp.jsonl"
        ref = tmp_path / "ref.jsonl"
        hyp.write_text('{"image_id": "1", "sentence": "a dog"}\n')
        ref.write_text('{"image_id": "2", "sentence": "a cat"}\n')
        with pytest.raises(ConfigError, match="no references"):
            corpus_from_files(hyp, ref)

    def test_tokenization_pinned(self):
        p = make_pair("1", "The Dog, Runs!", ["the dog runs"])
        assert p.hypothesis == ("the", "dog", "runs")
