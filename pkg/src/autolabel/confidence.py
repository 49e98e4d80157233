"""Confidence functions over a trained classifier.

Four variants produce per-class score vectors for a point:

* softmax response        -- the classifier's own softmax, no fitting
* temperature scaling     -- softmax of logits / T, T fit by NLL descent
* top-label histogram     -- uniform-mass binning of the predicted-class score
* confidence net          -- a small tanh network over the classifier's
                             representations, trained to maximize a smoothed
                             selection-coverage objective with a smoothed
                             selection-error penalty

Only the predicted class's score is ever compared to a threshold downstream,
but all variants return full k-vectors. The histogram variant patches only the
predicted entry and therefore does not sum to 1 by design.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSet
from .mlp import MlpClassifier, softmax
from .rng import stream
from .thresholds import predicted_scores, _per_point_thresholds


def sigmoid(alpha: float, z):
    """Scaled logistic 1/(1+exp(-alpha*z)), overflow-safe, elementwise.

    Keeps the input's float dtype for arrays; returns a plain float for
    scalar input.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.multiply(alpha, z)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if np.ndim(z) == 0:
        return float(out)
    return out


class ConfidenceModel:
    """Base: a fitted scorer bound to a classifier."""

    variant = "base"

    def __init__(self, classifier: MlpClassifier):
        self.classifier = classifier

    def scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, x: np.ndarray) -> np.ndarray:
        return self.scores(np.asarray(x)[None, :])[0]


class SoftmaxConfidence(ConfidenceModel):
    """The classifier's raw softmax; nothing to fit."""

    variant = "softmax"

    def scores(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.classifier.logits(X))


class TemperatureConfidence(ConfidenceModel):
    """softmax(logits / T). T rescales sharpness, never the argmax."""

    variant = "temperature"

    def __init__(self, classifier: MlpClassifier, temperature: float):
        super().__init__(classifier)
        if not (temperature > 0):
            raise ValueError("temperature must be positive")
        self.temperature = float(temperature)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.classifier.logits(X) / self.temperature)


class TopLabelHistogramConfidence(ConfidenceModel):
    """Per-class uniform-mass binning of the predicted-class softmax score.

    scores() starts from the raw softmax row and replaces only the predicted
    entry with its bin value, so rows need not sum to 1. Classes that had no
    calibration points keep the raw softmax row (fallback, recorded).
    """

    variant = "top_label_hb"

    def __init__(self, classifier: MlpClassifier, boundaries: dict,
                 values: dict, fallback_classes: tuple):
        super().__init__(classifier)
        self.boundaries = boundaries  # class -> ascending inner bin edges
        self.values = values          # class -> per-bin correct fraction
        self.fallback_classes = tuple(fallback_classes)

    def scores(self, X: np.ndarray) -> np.ndarray:
        probs = softmax(self.classifier.logits(X))
        preds = np.argmax(probs, axis=1)
        out = probs.copy()
        for y in self.values:
            mask = preds == y
            if not np.any(mask):
                continue
            top = probs[mask, y]
            idx = np.searchsorted(self.boundaries[y], top, side="right")
            out[mask, y] = self.values[y][idx]
        return out


def fit_temperature(h: MlpClassifier, d_cal: LabeledSet, lr: float = 0.01,
                    epochs: int = 500) -> TemperatureConfidence:
    """Fit T by full-batch gradient descent on log T minimizing mean NLL.

    The best iterate (lowest NLL, including the T=1 start) is returned, so the
    fit can never be worse than no scaling on the calibration data.
    """
    if len(d_cal) == 0:
        raise ValueError("empty calibration set")
    logits = np.asarray(h.logits(d_cal.features), dtype=np.float64)
    y = d_cal.labels
    rows = np.arange(len(d_cal))

    def nll(theta: float) -> float:
        z = logits * np.exp(-theta)
        shifted = z - z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        return float(np.mean(lse - shifted[rows, y]))

    theta = 0.0
    best_theta, best_nll = theta, nll(theta)
    for _ in range(epochs):
        c = np.exp(-theta)
        q = softmax(logits * c)
        # d(mean nll)/d(log T) = mean c*(z_y - E_q[z])
        grad = float(np.mean(c * (logits[rows, y] - (q * logits).sum(axis=1))))
        theta -= lr * grad
        cur = nll(theta)
        if cur < best_nll:
            best_nll, best_theta = cur, theta
    return TemperatureConfidence(h, float(np.exp(best_theta)))


def fit_top_label_hb(h: MlpClassifier, d_cal: LabeledSet,
                     points_per_bin: int = 25) -> TopLabelHistogramConfidence:
    """Build per-class uniform-mass bins from calibration data.

    For each class, calibration points predicted as that class are sorted by
    their softmax top score and split into round(m/points_per_bin) near-equal
    contiguous bins; each bin's value is its fraction of correct predictions.
    """
    if points_per_bin < 1:
        raise ValueError("points_per_bin must be >= 1")
    if len(d_cal) < points_per_bin:
        raise ValueError(
            f"need at least points_per_bin={points_per_bin} calibration points"
        )
    probs = softmax(h.logits(d_cal.features))
    preds = np.argmax(probs, axis=1)
    correct = (preds == d_cal.labels).astype(np.float64)
    boundaries: dict = {}
    values: dict = {}
    fallback = []
    for y in range(h.num_classes):
        mask = preds == y
        m = int(mask.sum())
        if m == 0:
            fallback.append(y)
            continue
        top = probs[mask, y]
        ok = correct[mask]
        order = np.argsort(top, kind="stable")
        n_bins = max(1, int(round(m / points_per_bin)))
        groups = np.array_split(order, n_bins)
        values[y] = np.array([ok[grp].mean() for grp in groups])
        boundaries[y] = np.array([top[grp[0]] for grp in groups[1:]])
    return TopLabelHistogramConfidence(h, boundaries, values, tuple(fallback))


@dataclass(frozen=True)
class TemperatureScalingConfig:
    learning_rate: float = 0.01
    epochs: int = 500

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0:
            raise ValueError("bad temperature-scaling settings")


@dataclass(frozen=True)
class TopLabelBinningConfig:
    points_per_bin: int = 25

    def __post_init__(self):
        if self.points_per_bin < 1:
            raise ValueError("points_per_bin must be >= 1")


# ---------------------------------------------------------------------------
# smoothed coverage/error surrogates


def surrogate_coverage(g, t, h, labeled: LabeledSet, alpha: float) -> float:
    """Mean sigmoid(alpha, score_of_predicted - threshold_of_predicted)."""
    if len(labeled) == 0:
        raise ValueError("empty set")
    top, preds, _ = predicted_scores(g, h, labeled)
    delta = top - _per_point_thresholds(t, preds)
    return float(np.mean(sigmoid(alpha, delta)))


def surrogate_error(g, t, h, labeled: LabeledSet, alpha: float,
                    denom_epsilon: float = 1e-8) -> float:
    """Sigmoid-weighted wrong mass over sigmoid-weighted selected mass."""
    if len(labeled) == 0:
        raise ValueError("empty set")
    top, preds, wrong = predicted_scores(g, h, labeled)
    u = sigmoid(alpha, top - _per_point_thresholds(t, preds))
    return float((u * wrong).sum() / (u.sum() + denom_epsilon))


# ---------------------------------------------------------------------------
# confidence net


@dataclass
class ConfidenceNetParams:
    """Learnable state: two bias-free layers plus unconstrained thresholds.

    W1: (k+d2, 2(k+d2)); W2: (2(k+d2), k); t_raw: (k,). Thresholds are read
    through the logistic when needed in (0,1).
    """

    W1: np.ndarray
    W2: np.ndarray
    t_raw: np.ndarray

    def copy(self) -> "ConfidenceNetParams":
        return ConfidenceNetParams(self.W1.copy(), self.W2.copy(),
                                   self.t_raw.copy())


@dataclass(frozen=True)
class ConfidenceNetConfig:
    """Optimizer settings for the smoothed selection objective.

    lam    : weight of the smoothed-error penalty (> 0)
    alpha  : sigmoid sharpness in both surrogate terms (> 0)
    """

    lam: float = 100.0
    alpha: float = 1.0
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    batch_size: int = 64
    max_epochs: int = 500
    seed: int = 0
    denom_epsilon: float = 1e-8

    def __post_init__(self):
        if self.lam <= 0 or self.alpha <= 0:
            raise ValueError("lam and alpha must be positive")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad optimizer settings")
        if self.weight_decay < 0 or self.denom_epsilon <= 0:
            raise ValueError("bad optimizer settings")


class ConfidenceNet(ConfidenceModel):
    """softmax(W2 tanh(W1 [logits, penultimate])) over classifier reps."""

    variant = "confidence_net"

    def __init__(self, classifier: MlpClassifier, params: ConfidenceNetParams):
        super().__init__(classifier)
        p = classifier.num_classes + classifier.penultimate_dim
        if params.W1.shape != (p, 2 * p):
            raise ValueError(f"W1 must be ({p}, {2 * p}), got {params.W1.shape}")
        if params.W2.shape != (2 * p, classifier.num_classes):
            raise ValueError("W2 shape mismatch")
        if params.t_raw.shape != (classifier.num_classes,):
            raise ValueError("t_raw shape mismatch")
        self.params = params

    def scores(self, X: np.ndarray) -> np.ndarray:
        z1, z2 = self.classifier.representations(X)
        Z = np.concatenate([z1, z2], axis=1)
        return softmax(np.tanh(Z @ self.params.W1) @ self.params.W2)

    @property
    def thresholds_logged(self) -> np.ndarray:
        """logistic(t_raw): logged for inspection, never used for labeling."""
        return sigmoid(1.0, self.params.t_raw)


def net_input(h: MlpClassifier, X: np.ndarray) -> np.ndarray:
    """Concatenated [logits, penultimate activations] rows for the net."""
    z1, z2 = h.representations(X)
    return np.concatenate([z1, z2], axis=1)


def init_confidence_net_params(k: int, d2: int, seed: int,
                               dtype=np.float32) -> ConfidenceNetParams:
    p = k + d2
    rng = stream(seed, "init")
    b1 = 1.0 / np.sqrt(p)
    b2 = 1.0 / np.sqrt(2 * p)
    return ConfidenceNetParams(
        W1=rng.uniform(-b1, b1, size=(p, 2 * p)).astype(dtype),
        W2=rng.uniform(-b2, b2, size=(2 * p, k)).astype(dtype),
        t_raw=np.zeros(k, dtype=dtype),
    )


def objective_value(params: ConfidenceNetParams, Z: np.ndarray,
                    yhat: np.ndarray, wrong: np.ndarray, lam: float,
                    alpha: float, denom_epsilon: float) -> float:
    """-(smoothed coverage) + lam * (smoothed selection error) on a batch."""
    val, _ = _objective_core(params, Z, yhat, wrong, lam, alpha,
                             denom_epsilon, want_grad=False)
    return val


def objective_grad(params: ConfidenceNetParams, Z: np.ndarray,
                   yhat: np.ndarray, wrong: np.ndarray, lam: float,
                   alpha: float, denom_epsilon: float):
    """(value, ConfidenceNetParams-shaped gradients) of the batch objective."""
    return _objective_core(params, Z, yhat, wrong, lam, alpha,
                           denom_epsilon, want_grad=True)


def _objective_core(params, Z, yhat, wrong, lam, alpha, denom_epsilon,
                    want_grad: bool):
    m = Z.shape[0]
    rows = np.arange(m)
    wrongf = np.asarray(wrong, dtype=Z.dtype)
    A = np.tanh(Z @ params.W1)
    V = A @ params.W2
    Q = softmax(V)
    s = Q[rows, yhat]
    tvec = sigmoid(1.0, params.t_raw)
    delta = s - tvec[yhat]
    u = sigmoid(alpha, delta)
    S = u.sum()
    M = (u * wrongf).sum()
    denom = S + denom_epsilon
    value = float(-u.mean() + lam * (M / denom))
    if not want_grad:
        return value, None
    # d value / d u_i, then chain through the sigmoid, softmax, and layers
    du = -1.0 / m + lam * (wrongf * denom - M) / (denom * denom)
    c = du * alpha * u * (1.0 - u)
    Gv = (c * s)[:, None] * (-Q)
    Gv[rows, yhat] += c * s
    dW2 = A.T @ Gv
    dA = Gv @ params.W2.T
    dPre = dA * (1.0 - A * A)
    dW1 = Z.T @ dPre
    dt = np.bincount(yhat, weights=-c, minlength=tvec.shape[0])
    dt_raw = dt * tvec * (1.0 - tvec)
    grads = ConfidenceNetParams(W1=dW1, W2=dW2,
                                t_raw=np.asarray(dt_raw, dtype=params.t_raw.dtype))
    return value, grads


def fit_confidence_net(h: MlpClassifier, d_cal: LabeledSet,
                       cfg: ConfidenceNetConfig):
    """Optimize the smoothed objective with Adam; returns (model, t_logged).

    The classifier is frozen: only W1, W2 and the auxiliary thresholds move.
    The auxiliary thresholds are returned (through the logistic) for logging;
    downstream threshold estimation never sees them. Mini-batches are drawn
    by per-epoch seeded shuffles; weight decay is decoupled and applied to
    the weight matrices only.
    """
    if len(d_cal) == 0:
        raise ValueError("empty calibration set")
    k = h.num_classes
    Z = np.asarray(net_input(h, d_cal.features), dtype=np.float32)
    preds = h.predict(d_cal.features)
    wrong = (preds != d_cal.labels)
    params = init_confidence_net_params(k, h.penultimate_dim, cfg.seed)
    mom = ConfidenceNetParams(np.zeros_like(params.W1),
                              np.zeros_like(params.W2),
                              np.zeros_like(params.t_raw))
    sec = ConfidenceNetParams(np.zeros_like(params.W1),
                              np.zeros_like(params.W2),
                              np.zeros_like(params.t_raw))
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    lr = np.float32(cfg.learning_rate)
    wd = np.float32(cfg.weight_decay)
    n = Z.shape[0]
    step = 0
    for epoch in range(cfg.max_epochs):
        order = stream(cfg.seed, "shuffle", epoch).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            _, g = objective_grad(params, Z[batch], preds[batch], wrong[batch],
                                  cfg.lam, cfg.alpha, cfg.denom_epsilon)
            step += 1
            c1 = np.float32(1.0 - b1 ** step)
            c2 = np.float32(1.0 - b2 ** step)
            for name in ("W1", "W2", "t_raw"):
                p = getattr(params, name)
                gr = getattr(g, name)
                mo = getattr(mom, name)
                se = getattr(sec, name)
                mo *= np.float32(b1)
                mo += np.float32(1 - b1) * gr
                se *= np.float32(b2)
                se += np.float32(1 - b2) * gr * gr
                p -= lr * (mo / c1) / (np.sqrt(se / c2) + np.float32(adam_eps))
                if name != "t_raw" and wd > 0:
                    p -= lr * wd * p
    model = ConfidenceNet(h, params)
    return model, np.asarray(sigmoid(1.0, params.t_raw), dtype=np.float64)


# ---------------------------------------------------------------------------
# score dumps


def write_score_dump(path: str, g: ConfidenceModel, h: MlpClassifier,
                     labeled: LabeledSet) -> None:
    """CSV of per-point predicted-class scores vs. the set's labels."""
    import csv as _csv
    preds = h.predict(labeled.features)
    scores = g.scores(labeled.features)
    top = scores[np.arange(len(labeled)), preds]
    with open(path, "w", newline="") as f:
        w = _csv.writer(f, lineterminator="\n")
        w.writerow(["point_id", "true_label", "predicted_label",
                    "score_of_predicted", "correct_flag"])
        for pid, lab, pred, sc in zip(labeled.ids, labeled.labels, preds, top):
            w.writerow([int(pid), int(lab), int(pred), repr(float(sc)),
                        int(lab == pred)])
