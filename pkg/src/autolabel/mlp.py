"""Small fully-connected classifier trained by hand-rolled backprop.

The network is deliberately tiny and explicit: tanh hidden layers, a linear
output layer, mini-batch SGD with momentum and decoupled weight decay, all in
float32 numpy. Two losses are supported: plain cross-entropy and squentropy
(cross-entropy plus the mean squared logit over the incorrect classes).

Everything a fitted model computes is deterministic; training is deterministic
given the TrainConfig seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import LabeledSet, TruncatedPayloadError, DataFormatError
from .rng import stream


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run. ``loss`` is "vanilla" or "squentropy"."""

    loss: str = "vanilla"
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("vanilla", "squentropy"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad training hyperparameters")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class RepPair:
    """Per-point representations: output logits and penultimate activations."""

    z1: np.ndarray  # (k,) logits
    z2: np.ndarray  # (d2,) post-tanh activations of the last hidden layer


class MlpClassifier:
    """Immutable stack of (weights, biases); weights[i] is (fan_in, fan_out)."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ValueError("weights/biases length mismatch")
        if len(weights) < 2:
            raise ValueError("need at least one hidden layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: shape mismatch {w.shape} / {b.shape}")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: fan-in does not match previous fan-out")
        self.weights = [np.asarray(w) for w in weights]
        self.biases = [np.asarray(b) for b in biases]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def penultimate_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> "list[int]":
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    # ------------------------------------------------------------------
    # inference

    def representations(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch (logits, penultimate activations) for rows of X."""
        A = np.asarray(X)
        if A.ndim != 2 or A.shape[1] != self.input_dim:
            raise ValueError(
                f"input has shape {A.shape}, model wants (*, {self.input_dim})"
            )
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            A = np.tanh(A @ w + b)
        logits = A @ self.weights[-1] + self.biases[-1]
        return logits, A

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.representations(X)[0]

    def probs(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax of logits == argmax of probs; ties go to the lowest index
        return np.argmax(self.logits(X), axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction. Works on 1-D too."""
    z = np.asarray(logits)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out


def forward(model: MlpClassifier, x: np.ndarray):
    """Single-point forward pass: (RepPair, probs on the simplex, prediction)."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ValueError(f"input length {x.shape} does not match d={model.input_dim}")
    z1, z2 = model.representations(x[None, :])
    probs = softmax(z1[0])
    return RepPair(z1=z1[0], z2=z2[0]), probs, int(np.argmax(probs))


# ---------------------------------------------------------------------------
# losses (dtype-generic; used in float32 by training, float64 by checks)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_vanilla(logits: np.ndarray, y: int) -> float:
    """Cross-entropy -log softmax(logits)[y], max-subtraction stabilized."""
    logits = np.asarray(logits)
    _check_label(logits, y)
    return float(-_log_softmax(logits)[..., y])


def loss_vanilla_grad(logits: np.ndarray, y: int):
    logits = np.asarray(logits)
    _check_label(logits, y)
    p = softmax(logits)
    g = p.copy()
    g[y] -= 1.0
    return float(-np.log(p[y])) if p[y] > 0 else loss_vanilla(logits, y), g


def loss_squentropy(logits: np.ndarray, y: int) -> float:
    """Cross-entropy plus the mean squared logit over incorrect classes."""
    logits = np.asarray(logits)
    k = logits.shape[-1]
    if k < 2:
        raise ValueError("squentropy needs at least 2 classes")
    _check_label(logits, y)
    sq = (np.sum(logits ** 2) - logits[y] ** 2) / (k - 1)
    return loss_vanilla(logits, y) + float(sq)


def loss_squentropy_grad(logits: np.ndarray, y: int):
    logits = np.asarray(logits)
    k = logits.shape[-1]
    if k < 2:
        raise ValueError("squentropy needs at least 2 classes")
    base, g = loss_vanilla_grad(logits, y)
    extra = (2.0 / (k - 1)) * logits
    extra = extra.copy()
    extra[y] = 0.0
    sq = (np.sum(logits ** 2) - logits[y] ** 2) / (k - 1)
    return base + float(sq), g + extra


def _check_label(logits: np.ndarray, y: int) -> None:
    if not (0 <= y < logits.shape[-1]):
        raise ValueError(f"label {y} out of range for k={logits.shape[-1]}")


def _batch_loss_and_dlogits(logits: np.ndarray, labels: np.ndarray, kind: str):
    """Mean loss over the batch and d(mean loss)/dlogits."""
    m, k = logits.shape
    rows = np.arange(m)
    logp = _log_softmax(logits)
    ce = -logp[rows, labels]
    p = np.exp(logp)
    d = p.copy()
    d[rows, labels] -= 1.0
    if kind == "squentropy":
        sq = (np.sum(logits ** 2, axis=1) - logits[rows, labels] ** 2) / (k - 1)
        extra = (2.0 / (k - 1)) * logits
        extra[rows, labels] = 0.0
        loss = float(np.mean(ce + sq))
        d = d + np.asarray(extra, dtype=d.dtype)
    else:
        loss = float(np.mean(ce))
    return loss, d / np.asarray(m, dtype=d.dtype)


# ---------------------------------------------------------------------------
# training


def init_mlp(dims, seed: int) -> MlpClassifier:
    """Fresh model, each layer U[-1/sqrt(fan_in), +1/sqrt(fan_in)], float32."""
    if len(dims) < 3:
        raise ValueError("dims must list input, >=1 hidden, output sizes")
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
        )
        biases.append(rng.uniform(-bound, bound, size=fan_out).astype(np.float32))
    return MlpClassifier(weights, biases)


def train_model(config: TrainConfig, train_set: LabeledSet, dims) -> MlpClassifier:
    """Mini-batch SGD with momentum and decoupled weight decay.

    ``dims`` is the full width list [d_in, hidden..., k]; it must agree with
    the dataset's feature dim and class count. Data is reshuffled every epoch
    from the config's seed stream; the final-epoch model is returned.

    The update per step, with velocity v and gradient grad:

        v   <- momentum * v + grad
        w   <- w - lr * v - lr * weight_decay * w

    so weight_decay=0 is exactly plain SGD with momentum, and the decay is
    never folded into the gradient (decoupled).
    """
    if len(train_set) < 1:
        raise ValueError("empty training set")
    dims = list(int(v) for v in dims)
    if dims[0] != train_set.dataset.dim:
        raise ValueError(
            f"arch input dim {dims[0]} != data dim {train_set.dataset.dim}"
        )
    if dims[-1] != train_set.dataset.num_classes:
        raise ValueError(
            f"arch output dim {dims[-1]} != num_classes "
            f"{train_set.dataset.num_classes}"
        )
    model = init_mlp(dims, config.seed)
    X = np.ascontiguousarray(train_set.features, dtype=np.float32)
    y = train_set.labels
    m = X.shape[0]
    lr = np.float32(config.learning_rate)
    mu = np.float32(config.momentum)
    wd = np.float32(config.weight_decay)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    for epoch in range(config.max_epochs):
        order = stream(config.seed, "shuffle", epoch).permutation(m)
        for lo in range(0, m, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            grads_w, grads_b = _backprop(model, X[batch], y[batch], config.loss)
            for i in range(len(model.weights)):
                vel_w[i] = mu * vel_w[i] + grads_w[i]
                vel_b[i] = mu * vel_b[i] + grads_b[i]
                model.weights[i] -= lr * vel_w[i] + lr * wd * model.weights[i]
                model.biases[i] -= lr * vel_b[i] + lr * wd * model.biases[i]
    return model


def _backprop(model: MlpClassifier, Xb: np.ndarray, yb: np.ndarray, kind: str):
    """Gradients of the mean batch loss w.r.t. every weight and bias."""
    acts = [Xb]
    A = Xb
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        A = np.tanh(A @ w + b)
        acts.append(A)
    logits = A @ model.weights[-1] + model.biases[-1]
    _, dlogits = _batch_loss_and_dlogits(logits, yb, kind)
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    grads_w[-1] = acts[-1].T @ dlogits
    grads_b[-1] = dlogits.sum(axis=0)
    dA = dlogits @ model.weights[-1].T
    for l in range(len(model.weights) - 2, -1, -1):
        dZ = dA * (1.0 - acts[l + 1] ** 2)
        grads_w[l] = acts[l].T @ dZ
        grads_b[l] = dZ.sum(axis=0)
        dA = dZ @ model.weights[l].T
    return grads_w, grads_b


def batch_loss(model: MlpClassifier, X: np.ndarray, y: np.ndarray,
               kind: str = "vanilla") -> float:
    """Mean loss of the model on (X, y); used by tests and sanity checks."""
    logits = model.logits(np.asarray(X, dtype=model.weights[0].dtype))
    loss, _ = _batch_loss_and_dlogits(logits, np.asarray(y), kind)
    return loss


# ---------------------------------------------------------------------------
# margins


def margin_score(probs: np.ndarray) -> float:
    """Top-1 minus top-2 probability; small margin = uncertain point."""
    p = np.asarray(probs)
    if p.shape[-1] < 2:
        raise ValueError("margin needs at least 2 classes")
    top2 = np.partition(p, -2)[..., -2:]
    return float(top2[..., 1] - top2[..., 0])


def margin_scores(probs: np.ndarray) -> np.ndarray:
    """Vectorized margin_score over rows."""
    p = np.asarray(probs)
    if p.ndim != 2 or p.shape[1] < 2:
        raise ValueError("expected (n, k>=2) probabilities")
    top2 = np.partition(p, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


# ---------------------------------------------------------------------------
# checkpointing: little-endian float32 blobs plus a text manifest


def save_model(model: MlpClassifier, path: str) -> None:
    """Write the model under directory ``path``; round-trips exactly."""
    os.makedirs(path, exist_ok=True)
    dims = ",".join(str(v) for v in model.dims)
    with open(os.path.join(path, "manifest.txt"), "w") as f:
        f.write(f"dims={dims}\ndtype=<f4\n")
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        with open(os.path.join(path, f"w{i}.f32"), "wb") as f:
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
        with open(os.path.join(path, f"b{i}.f32"), "wb") as f:
            f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path: str) -> MlpClassifier:
    manifest = os.path.join(path, "manifest.txt")
    fields = {}
    with open(manifest) as f:
        for line in f:
            line = line.strip()
            if line:
                key, _, val = line.partition("=")
                fields[key] = val
    if "dims" not in fields:
        raise DataFormatError(f"{manifest}: missing dims=")
    if fields.get("dtype", "<f4") != "<f4":
        raise DataFormatError(f"{manifest}: unsupported dtype {fields['dtype']!r}")
    try:
        dims = [int(v) for v in fields["dims"].split(",")]
    except ValueError:
        raise DataFormatError(f"{manifest}: bad dims value") from None
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        weights.append(_read_blob(os.path.join(path, f"w{i}.f32"),
                                  fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(_read_blob(os.path.join(path, f"b{i}.f32"), fan_out))
    return MlpClassifier(weights, biases)


def _read_blob(path: str, count: int) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) != count * 4:
        raise TruncatedPayloadError(
            f"{path}: expected {count * 4} bytes, found {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4").copy()
