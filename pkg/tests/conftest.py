import numpy as np
import pytest

import autolabel as al

CROSS_MEANS = np.array([[3.0, 0.0], [0.0, 3.0], [-3.0, 0.0], [0.0, -3.0]])


def four_blobs(n=400, sigma=1.0, seed=1):
    """Well-separated 4-class 2-D mixture; a small MLP gets ~99% on it."""
    return al.synth_gaussian_mixture(4, 2, CROSS_MEANS, sigma, n, seed)


def label_everything(ds, round_index=0):
    return al.LabeledSet.from_oracle(ds, np.arange(ds.n), round_index)


class FixedModel:
    """Classifier stub: feature column 0 is a row index into fixed outputs."""

    def __init__(self, preds):
        self._preds = np.asarray(preds, dtype=np.int64)

    def predict(self, X):
        return self._preds[np.asarray(X[:, 0], dtype=np.int64)]


class FixedScores:
    """Confidence stub paired with FixedModel; rows indexed the same way."""

    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=np.float64)

    def scores(self, X):
        return self._scores[np.asarray(X[:, 0], dtype=np.int64)]


def indexed_set(true_labels, k):
    """LabeledSet whose single feature is the row index, labels as given."""
    labels = np.asarray(true_labels, dtype=np.int64)
    n = labels.shape[0]
    ds = al.Dataset(np.arange(n, dtype=np.float32).reshape(n, 1), labels, k)
    return al.LabeledSet.from_oracle(ds, np.arange(n), 0)


def single_class_instance(top_scores, correct):
    """A k=2 set where every true label is 0 and wrong points predict class 1."""
    top_scores = np.asarray(top_scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n = top_scores.shape[0]
    labeled = indexed_set(np.zeros(n, dtype=np.int64), 2)
    preds = np.where(correct, 0, 1)
    scores = np.zeros((n, 2))
    scores[np.arange(n), preds] = top_scores
    return labeled, FixedModel(preds), FixedScores(scores)


@pytest.fixture
def blobs():
    return four_blobs()


@pytest.fixture
def blob_model(blobs):
    labeled = label_everything(blobs)
    cfg = al.TrainConfig(max_epochs=30, seed=11)
    return al.train_model(cfg, labeled, [2, 16, 4])
