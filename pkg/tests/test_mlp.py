import numpy as np
import pytest

import autolabel as al
from autolabel.mlp import (
    batch_loss,
    loss_squentropy_grad,
    loss_vanilla_grad,
    _backprop,
)
from autolabel.numcheck import central_difference, relative_error

from conftest import four_blobs, label_everything


def tiny_model(dims=(3, 5, 4), seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0, 0.5, size=(a, b)).astype(dtype)
               for a, b in zip(dims[:-1], dims[1:])]
    biases = [rng.normal(0, 0.5, size=b).astype(dtype) for b in dims[1:]]
    return al.MlpClassifier(weights, biases)


# ---------------------------------------------------------------------------
# forward


def test_forward_zero_weights_uniform():
    k = 4
    weights = [np.zeros((3, 6)), np.zeros((6, k))]
    biases = [np.zeros(6), np.zeros(k)]
    model = al.MlpClassifier(weights, biases)
    rep, probs, pred = al.forward(model, np.array([1.0, -2.0, 0.5]))
    assert np.allclose(probs, 1 / k)
    assert pred == 0
    assert rep.z1.shape == (k,) and rep.z2.shape == (6,)


def test_forward_probs_normalized_and_argmax_consistent():
    model = tiny_model()
    rng = np.random.default_rng(1)
    X = rng.normal(0, 3, size=(1000, 3))
    logits = model.logits(X)
    probs = al.softmax(logits)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert np.array_equal(np.argmax(probs, axis=1), np.argmax(logits, axis=1))


def test_forward_dimension_mismatch():
    model = tiny_model()
    with pytest.raises(ValueError):
        al.forward(model, np.zeros(5))


def test_model_shape_validation():
    with pytest.raises(ValueError):
        al.MlpClassifier([np.zeros((3, 4))], [np.zeros(4)])  # single layer
    with pytest.raises(ValueError):
        al.MlpClassifier([np.zeros((3, 4)), np.zeros((5, 2))],
                         [np.zeros(4), np.zeros(2)])


# ---------------------------------------------------------------------------
# losses


def test_loss_vanilla_uniform_case():
    assert al.loss_vanilla(np.zeros(10), 3) == pytest.approx(np.log(10), rel=1e-12)


def test_loss_vanilla_saturated():
    logits = np.zeros(5)
    logits[2] = 1000.0
    assert al.loss_vanilla(logits, 2) == pytest.approx(0.0, abs=1e-12)
    # and the stabilized form survives the hopeless case too
    assert al.loss_vanilla(logits, 0) == pytest.approx(1000.0, rel=1e-9)


def test_loss_vanilla_matches_high_precision_reference():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 60
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = int(rng.integers(2, 8))
        logits = rng.normal(0, 5, size=k)
        y = int(rng.integers(k))
        denom = sum(mp.e ** mp.mpf(v) for v in logits)
        expected = float(-mp.log(mp.e ** mp.mpf(logits[y]) / denom))
        assert al.loss_vanilla(logits, y) == pytest.approx(expected, rel=1e-12)


def test_loss_squentropy_examples():
    assert al.loss_squentropy(np.zeros(10), 4) == pytest.approx(np.log(10))
    logits = np.zeros(10)
    logits[0] = 2.0
    assert al.loss_squentropy(logits, 0) == pytest.approx(
        al.loss_vanilla(logits, 0))
    logits = np.zeros(10)
    logits[1] = 3.0
    expected = al.loss_vanilla(logits, 0) + 9.0 / 9.0
    assert al.loss_squentropy(logits, 0) == pytest.approx(expected, rel=1e-12)


def test_loss_squentropy_dominates_vanilla():
    rng = np.random.default_rng(3)
    for _ in range(200):
        k = int(rng.integers(2, 9))
        logits = rng.normal(0, 4, size=k)
        y = int(rng.integers(k))
        assert al.loss_squentropy(logits, y) >= al.loss_vanilla(logits, y) - 1e-12


def test_loss_squentropy_rejects_k1():
    with pytest.raises(ValueError):
        al.loss_squentropy(np.zeros(1), 0)


def test_loss_label_out_of_range():
    with pytest.raises(ValueError):
        al.loss_vanilla(np.zeros(3), 3)


# ---------------------------------------------------------------------------
# gradients


@pytest.mark.parametrize("grad_fn,loss_fn", [
    (loss_vanilla_grad, al.loss_vanilla),
    (loss_squentropy_grad, al.loss_squentropy),
])
def test_loss_gradients_match_finite_differences(grad_fn, loss_fn):
    rng = np.random.default_rng(17)
    for _ in range(120):
        k = int(rng.integers(2, 7))
        logits = rng.normal(0, 3, size=k)
        y = int(rng.integers(k))
        _, analytic = grad_fn(logits, y)
        numeric = central_difference(lambda z: loss_fn(z, y), logits.copy())
        assert relative_error(analytic, numeric) <= 1e-4


def test_backprop_matches_finite_differences_through_network():
    rng = np.random.default_rng(5)
    for trial in range(10):
        model = tiny_model(dims=(3, 4, 3), seed=trial)
        X = rng.normal(0, 1, size=(6, 3))
        y = rng.integers(0, 3, size=6)
        kind = "squentropy" if trial % 2 else "vanilla"
        grads_w, grads_b = _backprop(model, X, y, kind)
        for li in range(2):
            def f_w(w, li=li):
                trial_model = al.MlpClassifier(
                    [w if i == li else model.weights[i] for i in range(2)],
                    model.biases)
                return batch_loss(trial_model, X, y, kind)
            numeric = central_difference(f_w, model.weights[li].copy())
            assert relative_error(grads_w[li], numeric) <= 1e-4

            def f_b(b, li=li):
                trial_model = al.MlpClassifier(
                    model.weights,
                    [b if i == li else model.biases[i] for i in range(2)])
                return batch_loss(trial_model, X, y, kind)
            numeric_b = central_difference(f_b, model.biases[li].copy())
            assert relative_error(grads_b[li], numeric_b) <= 1e-4


# ---------------------------------------------------------------------------
# training


def test_train_separable_reaches_full_accuracy():
    means = np.array([[-10.0], [10.0]])
    ds = al.synth_gaussian_mixture(2, 1, means, 1.0, 60, seed=2)
    labeled = label_everything(ds)
    cfg = al.TrainConfig(max_epochs=50, learning_rate=0.05, seed=3)
    model = al.train_model(cfg, labeled, [1, 8, 2])
    acc = np.mean(model.predict(ds.features) == ds.hidden_labels)
    assert acc == 1.0


def test_train_single_point_loss_decreases():
    ds = four_blobs(n=8)
    labeled = label_everything(ds).take([0])
    losses = []
    for epochs in range(6):
        cfg = al.TrainConfig(max_epochs=epochs, learning_rate=0.01, seed=4,
                             momentum=0.0)
        model = al.train_model(cfg, labeled, [2, 8, 4])
        losses.append(batch_loss(model, labeled.features, labeled.labels))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_train_determinism():
    ds = four_blobs(n=60)
    labeled = label_everything(ds)
    cfg = al.TrainConfig(max_epochs=10, seed=9)
    m1 = al.train_model(cfg, labeled, [2, 8, 4])
    m2 = al.train_model(cfg, labeled, [2, 8, 4])
    for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
        assert np.array_equal(a, b)


def test_train_zero_decay_is_plain_momentum_sgd():
    # decoupled decay multiplies weights by (1 - lr*wd) besides the step;
    # with wd=0 the update must be bit-for-bit plain SGD+momentum
    ds = four_blobs(n=40)
    labeled = label_everything(ds)
    a = al.train_model(al.TrainConfig(max_epochs=5, weight_decay=0.0, seed=1),
                       labeled, [2, 6, 4])
    b = al.train_model(al.TrainConfig(max_epochs=5, seed=1), labeled, [2, 6, 4])
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(wa, wb)


def test_train_weight_decay_shrinks_norms():
    ds = four_blobs(n=40)
    labeled = label_everything(ds)
    free = al.train_model(al.TrainConfig(max_epochs=20, seed=1), labeled,
                          [2, 6, 4])
    decayed = al.train_model(
        al.TrainConfig(max_epochs=20, weight_decay=0.1, seed=1), labeled,
        [2, 6, 4])
    assert np.linalg.norm(decayed.weights[0]) < np.linalg.norm(free.weights[0])


def test_train_arch_mismatch():
    ds = four_blobs(n=10)
    labeled = label_everything(ds)
    with pytest.raises(ValueError):
        al.train_model(al.TrainConfig(), labeled, [3, 8, 4])
    with pytest.raises(ValueError):
        al.train_model(al.TrainConfig(), labeled, [2, 8, 5])


def test_train_rejects_empty_set():
    ds = four_blobs(n=10)
    with pytest.raises(ValueError):
        al.train_model(al.TrainConfig(), al.LabeledSet.empty(ds), [2, 8, 4])


# ---------------------------------------------------------------------------
# margins


def test_margin_score_examples():
    assert al.margin_score(np.full(4, 0.25)) == pytest.approx(0.0)
    one_hot = np.zeros(5)
    one_hot[2] = 1.0
    assert al.margin_score(one_hot) == pytest.approx(1.0)
    assert al.margin_score(np.array([0.5, 0.3, 0.2])) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        al.margin_score(np.array([1.0]))


def test_margin_scores_batch_matches_scalar():
    rng = np.random.default_rng(0)
    P = al.softmax(rng.normal(0, 2, size=(50, 6)))
    batch = al.margin_scores(P)
    for i in range(50):
        assert batch[i] == pytest.approx(al.margin_score(P[i]))


# ---------------------------------------------------------------------------
# checkpointing


def test_checkpoint_roundtrip_exact(tmp_path, blob_model):
    path = str(tmp_path / "ckpt")
    al.save_model(blob_model, path)
    back = al.load_model(path)
    assert back.dims == blob_model.dims
    for a, b in zip(back.weights + back.biases,
                    blob_model.weights + blob_model.biases):
        assert a.dtype == np.float32
        assert np.array_equal(a, b)


def test_checkpoint_truncated_blob(tmp_path, blob_model):
    path = str(tmp_path / "ckpt")
    al.save_model(blob_model, path)
    blob = tmp_path / "ckpt" / "w0.f32"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(al.TruncatedPayloadError):
        al.load_model(path)
