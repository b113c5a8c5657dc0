import numpy as np
import pytest

from isl_recognizer.errors import FeatureGridMismatch, KnnError
from isl_recognizer.grid_features import FeatureVector, GridSpec
from isl_recognizer.knn_classifier import KdTree, LabeledSample, classify, classify_many, fit, nearest

GRID = GridSpec(1, 3)


def _sample(label, *values):
    return LabeledSample(label, FeatureVector(np.array(values, dtype=float), GRID))


def test_majority_vote():
    samples = [_sample("A", 0, 0, 0), _sample("B", 1, 1, 1), _sample("B", 1, 1, 0.9), _sample("A", 5, 5, 5)]
    model = fit(samples, k=3, backend="brute")
    result = classify(model, FeatureVector([0.9, 0.9, 0.9], GRID))
    assert (result.label, result.votes) == ("B", 2)
    assert result.neighbors == (2, 1, 0)


def test_vote_tie_goes_to_the_closer_class():
    samples = [_sample("A", 0, 0, 0), _sample("B", 0.4, 0, 0), _sample("A", 3, 0, 0), _sample("B", 0.5, 0, 0)]
    model = fit(samples, k=4, backend="kd_tree")
    assert classify(model, FeatureVector([0.1, 0, 0], GRID)).label == "B"


def test_vote_tie_at_equal_distance_goes_to_the_smaller_label():
    samples = [_sample("Z", 1, 0, 0), _sample("M", -1, 0, 0)]
    for backend in ("brute", "kd_tree"):
        model = fit(samples, k=2, backend=backend)
        assert classify(model, FeatureVector([0, 0, 0], GRID)).label == "M"


def test_distance_ties_rank_by_insertion_order():
    samples = [_sample(label, 1, 1, 1) for label in "CBA"]
    model = fit(samples, k=1, backend="kd_tree", leaf_size=1)
    assert nearest(model, FeatureVector([1, 1, 1], GRID)) == [(0.0, 0)]


def test_backends_agree(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        dims = int(rng.integers(1, 6))
        grid = GridSpec(1, dims)
        # coarse values make exact distance ties common
        data = rng.integers(0, 4, size=(n, dims)) / 3.0
        labels = rng.choice(["Fist", "Five", "L_Shape"], size=n)
        samples = [LabeledSample(str(lbl), FeatureVector(row, grid)) for lbl, row in zip(labels, data)]
        k = int(rng.integers(1, min(n, 7) + 1))
        brute = fit(samples, k=k, backend="brute")
        tree = fit(samples, k=k, backend="kd_tree", leaf_size=int(rng.integers(1, 5)))
        query = FeatureVector(rng.integers(0, 4, size=dims) / 3.0, grid)
        assert nearest(brute, query) == nearest(tree, query)
        a, b = classify(brute, query), classify(tree, query)
        assert (a.label, a.votes) == (b.label, b.votes)


def test_kd_tree_query_matches_a_sorted_scan(rng):
    data = rng.random((200, 4))
    tree = KdTree(data, leaf_size=8)
    q = rng.random(4)
    dists = ((data - q) ** 2).sum(axis=1)
    expected = sorted(zip(dists.tolist(), range(len(data))))[:10]
    found = tree.query(q, 10)
    assert [i for _, i in found] == [i for _, i in expected]
    assert [d for d, _ in found] == pytest.approx([d for d, _ in expected], abs=1e-12)


def test_fit_validation():
    with pytest.raises(KnnError):
        fit([], k=1)
    with pytest.raises(KnnError):
        fit([_sample("A", 0, 0, 0)], k=2)
    with pytest.raises(KnnError):
        fit([_sample("A", 0, 0, 0)], k=1, backend="ball_tree")
    mixed = [_sample("A", 0, 0, 0), LabeledSample("B", FeatureVector([0, 0, 0], GridSpec(3, 1)))]
    with pytest.raises(FeatureGridMismatch):
        fit(mixed, k=1)


def test_query_grid_must_match_the_model():
    model = fit([_sample("A", 0, 0, 0)], k=1)
    with pytest.raises(FeatureGridMismatch):
        classify(model, FeatureVector([0, 0, 0], GridSpec(3, 1)))


def test_model_accessors():
    model = fit([_sample("B", 0, 0, 0), _sample("A", 1, 0, 0), _sample("B", 2, 0, 0)], k=1)
    assert model.labels == ["A", "B"]
    assert len(model) == 3
    assert [s.label for s in model.samples] == ["B", "A", "B"]
    assert [r.label for r in classify_many(model, [s.features for s in model.samples])] == ["B", "A", "B"]
