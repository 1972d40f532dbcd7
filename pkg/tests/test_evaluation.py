"""Metrics and intrusion-test tooling."""

import numpy as np
import pytest

from opinionsum.evaluation import (
    classification_metrics,
    coherence_score,
    diversity,
    make_intrusion_set,
)


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        pred = ["a", "b", "a"]
        report = classification_metrics(pred, list(pred))
        assert report.accuracy == report.precision == report.recall == report.macro_f1 == 1.0

    def test_hand_confusion_fixture(self):
        # class a: TP=2 FP=1 FN=1; class b: TP=3 FP=1 FN=1
        pred = ["a", "a", "a", "b", "b", "b", "b"]
        gold = ["a", "a", "b", "a", "b", "b", "b"]
        report = classification_metrics(pred, gold)
        f1_a = 2 * 2 / (2 * 2 + 1 + 1)
        f1_b = 2 * 3 / (2 * 3 + 1 + 1)
        assert report.macro_f1 == pytest.approx((f1_a + f1_b) / 2)
        assert report.macro_f1 == pytest.approx(0.7083, abs=5e-5)
        assert report.accuracy == pytest.approx(5 / 7)

    def test_all_none_predictions(self):
        report = classification_metrics([None, None], ["a", "b"])
        assert report.accuracy == 0.0
        assert report.macro_f1 == 0.0

    def test_none_counts_in_accuracy(self):
        report = classification_metrics([None, "a"], [None, "a"])
        assert report.accuracy == 1.0

    def test_class_absent_from_both_contributes_zero_f1(self):
        report = classification_metrics(["a"], ["a"], labels=["a", "ghost"])
        assert report.macro_f1 == pytest.approx(0.5)

    def test_multilabel_gold_membership(self):
        report = classification_metrics(["a", "b"], [["b", "a"], ["a"]])
        assert report.accuracy == 0.5  # first correct via membership, second wrong

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            classification_metrics(["a"], ["a", "b"])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        pred = [rng.choice(["a", "b", None]) for _ in range(60)]
        gold = [rng.choice(["a", "b", None]) for _ in range(60)]
        base = classification_metrics(pred, gold)
        order = rng.permutation(60)
        shuffled = classification_metrics([pred[i] for i in order], [gold[i] for i in order])
        assert base == shuffled


class TestDiversity:
    def test_repeated_phrase(self):
        assert diversity(["good food", "good food"]) == 0.5

    def test_single_word_phrase(self):
        assert diversity(["burger"]) == 1.0

    def test_hand_count(self):
        assert diversity(["great burger", "tasty burger", "huge burger"]) == pytest.approx(4 / 6)

    def test_case_folded(self):
        assert diversity(["Good food", "good Food"]) == 0.5

    def test_range(self):
        rng = np.random.default_rng(1)
        words = ["a", "b", "c", "d"]
        for _ in range(50):
            cluster = [
                " ".join(rng.choice(words, size=rng.integers(1, 4)))
                for _ in range(rng.integers(1, 5))
            ]
            value = diversity(cluster)
            assert 0 < value <= 1
            tokens = [w for p in cluster for w in p.split()]
            assert (value == 1.0) == (len(set(tokens)) == len(tokens))


def _bread_clusters():
    cluster = [
        "warm bread basket on arrival",
        "the bread basket kept coming",
        "lovely bread with olive oil",
        "fresh bread every visit",
        "that bread basket though",
    ]
    others = [
        ["sweet dessert bread at the end", "corn bread on the side"],
        ["slow service tonight", "waiter forgot our order"],
    ]
    return [cluster] + others


class TestIntrusion:
    def test_infeasible_when_no_shared_word_outside(self):
        clusters = [
            ["alpha one", "alpha two", "alpha three", "alpha four", "alpha five"],
            ["beta six", "beta seven"],
        ]
        assert make_intrusion_set(clusters, 0) is None

    def test_bread_cluster(self):
        made = make_intrusion_set(_bread_clusters(), 7)
        assert made is not None
        assert made.shared_word == "bread"
        assert "bread" in made.intruder
        assert len(made.display_phrases()) == 6

    def test_requires_two_clusters(self):
        assert make_intrusion_set([["a b c d e f"] * 5], 0) is None

    def test_requires_five_member_cluster(self):
        clusters = [["x one", "x two"], ["x three", "x four"]]
        assert make_intrusion_set(clusters, 0) is None

    def test_seeded_reproducible(self):
        a = make_intrusion_set(_bread_clusters(), 13)
        b = make_intrusion_set(_bread_clusters(), 13)
        assert a == b

    def test_property_many_seeds(self):
        rng = np.random.default_rng(2)
        shared = ["zig", "zag", "zop"]
        clusters = []
        for c in range(4):
            cluster = []
            for i in range(8):
                w = shared[int(rng.integers(len(shared)))]
                cluster.append(f"{w} item{c}x{i} filler{int(rng.integers(5))}")
            clusters.append(cluster)
        for seed in range(200):
            made = make_intrusion_set(clusters, seed)
            if made is None:
                continue
            phrases = made.display_phrases()
            assert len(phrases) == 6
            for p in phrases:
                assert made.shared_word in p.split()
            assert phrases[made.answer_key] == made.intruder
            assert made.intruder not in made.in_cluster


class TestCoherence:
    def _sets(self, keys):
        from opinionsum.evaluation import IntrusionSet

        return [IntrusionSet(f"s{i}", ["a"] * 5, "b", "w", k) for i, k in enumerate(keys)]

    def test_all_correct(self):
        sets = self._sets([0, 3, 5])
        assert coherence_score(sets, [0, 3, 5]) == 1.0

    def test_none_correct(self):
        sets = self._sets([0, 3, 5])
        assert coherence_score(sets, [1, 1, 1]) == 0.0

    def test_ratio(self):
        sets = self._sets([0] * 40)
        answers = [0] * 27 + [1] * 13
        assert coherence_score(sets, answers) == pytest.approx(0.675)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            coherence_score(self._sets([0]), [0, 1])
