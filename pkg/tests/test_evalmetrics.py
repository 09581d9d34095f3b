import numpy as np
import pytest

from src.errors import DimensionError
from src.evalmetrics import (
    accuracy,
    average_precision,
    jaccard_relevance,
    multilabel_map,
    ndcg,
    ranking,
    retrieval_metrics,
)


def brute_ap(scores, relevant):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for rank, i in enumerate(order, start=1):
        if relevant[i]:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


def brute_ndcg(scores, gains):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    dcg = sum(gains[i] / np.log2(rank + 1) for rank, i in enumerate(order, start=1))
    ideal = sum(g / np.log2(rank + 1) for rank, g in enumerate(sorted(gains, reverse=True), start=1))
    return dcg / ideal if ideal > 0 else 0.0


class TestRankingMetrics:
    def test_ties_break_by_index(self):
        assert ranking(np.array([0.5, 0.9, 0.5, 0.9])).tolist() == [1, 3, 0, 2]

    def test_against_direct_loops(self, np_rng):
        for _ in range(50):
            n = int(np_rng.integers(1, 12))
            scores = np.round(np_rng.normal(size=n), 1)
            relevant = np_rng.random(n) < 0.4
            gains = np_rng.integers(0, 3, n).astype(float)
            assert average_precision(scores, relevant) == pytest.approx(brute_ap(scores, relevant))
            assert ndcg(scores, gains) == pytest.approx(brute_ndcg(scores, gains))

    def test_perfect_and_worst_rankings(self):
        assert average_precision(np.array([3.0, 2.0, 1.0]), np.array([1, 1, 0])) == 1.0
        assert average_precision(np.array([1.0, 2.0, 3.0]), np.array([1, 0, 0])) == pytest.approx(1 / 3)

    def test_no_relevant_items(self):
        assert average_precision(np.array([1.0, 2.0]), np.array([0, 0])) == 0.0
        assert ndcg(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 0.0


class TestClassification:
    def test_multilabel_map_skips_empty_classes(self):
        scores = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0]])
        labels = np.array([[1, 0, 0], [0, 1, 0]])
        report = multilabel_map(scores, labels)
        assert report["mAP"] == 1.0
        assert report["classes"] == 2 and report["skipped"] == 1

    def test_multilabel_map_shape_check(self):
        with pytest.raises(DimensionError):
            multilabel_map(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_accuracy_ties_go_to_lowest_class(self):
        scores = np.array([[0.5, 0.5], [0.1, 0.9], [0.7, 0.2]])
        report = accuracy(scores, np.array([0, 1, 1]))
        assert report["top1"] == pytest.approx(2 / 3)
        assert report["mean_class"] == pytest.approx(0.75)


class TestRetrieval:
    def test_single_pair_is_perfect(self):
        report = retrieval_metrics(np.array([[0.3]]), np.array([[1.0]]))
        assert report["v2t_mAP"] == report["t2v_mAP"] == 1.0
        assert report["v2t_nDCG"] == report["t2v_nDCG"] == 1.0

    def test_directions_use_rows_and_columns(self):
        sim = np.array([[0.9, 0.1], [0.8, 0.2]])
        rel = np.eye(2)
        report = retrieval_metrics(sim, rel)
        assert report["v2t_mAP"] == pytest.approx((1.0 + 0.5) / 2)
        assert report["t2v_mAP"] == 1.0

    def test_queries_without_relevance_are_counted(self):
        report = retrieval_metrics(np.eye(2), np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert report["v2t_skipped"] == 1 and report["t2v_skipped"] == 1

    def test_jaccard_relevance(self):
        a = np.array([[1, 1, 0], [0, 0, 0]])
        b = np.array([[1, 0, 0], [0, 1, 1]])
        np.testing.assert_allclose(jaccard_relevance(a, b), [[0.5, 1 / 3], [0.0, 0.0]])
