"""Empirical coverage/error estimators and per-class threshold selection.

Selection semantics throughout: a point is selected when the confidence of its
PREDICTED class is >= the threshold for that class (ties inclusive). Thresholds
may be +inf, meaning "never auto-label this class".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSet


def default_grid() -> np.ndarray:
    """200 uniform candidate thresholds 0.005 .. 1.0."""
    return np.linspace(0.005, 1.0, 200)


@dataclass(frozen=True)
class ThresholdVector:
    """Per-class selection thresholds; entries in [0,1] or +inf."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("thresholds must be a non-empty 1-D vector")
        finite = v[np.isfinite(v)]
        if finite.size and (finite.min() < 0 or finite.max() > 1):
            raise ValueError("finite thresholds must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def num_classes(self) -> int:
        return int(self.values.shape[0])

    def per_point(self, predicted: np.ndarray) -> np.ndarray:
        return self.values[np.asarray(predicted, dtype=np.int64)]

    def to_jsonable(self) -> list:
        # +inf has no strict-JSON spelling; serialize it as null
        return [None if not np.isfinite(v) else float(v) for v in self.values]

    @classmethod
    def from_jsonable(cls, items) -> "ThresholdVector":
        return cls(np.array([np.inf if v is None else float(v) for v in items]))

    @classmethod
    def all_infinite(cls, k: int) -> "ThresholdVector":
        return cls(np.full(k, np.inf))


@dataclass(frozen=True)
class ThresholdConfig:
    """Settings for estimate_thresholds.

    grid       : ascending candidate thresholds in [0,1]
    rho0       : minimum selectable fraction of the class group (coverage floor)
    c1         : multiplier on the binomial std added to the error estimate
    eps_a      : auto-labeling error tolerance the selection must respect
    group_by   : "true_label" groups estimation points by their true class,
                 "predicted_label" by the classifier's prediction
    """

    grid: np.ndarray = field(default_factory=default_grid)
    rho0: float = 0.05
    c1: float = 0.25
    eps_a: float = 0.05
    group_by: str = "true_label"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("grid must be a non-empty 1-D array")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly ascending")
        if g[0] < 0 or g[-1] > 1:
            raise ValueError("grid values must lie in [0, 1]")
        if not (0.0 < self.rho0 <= 1.0):
            raise ValueError("rho0 must be in (0, 1]")
        if self.c1 < 0:
            raise ValueError("c1 must be >= 0")
        if not (0.0 <= self.eps_a <= 1.0):
            raise ValueError("eps_a must be in [0, 1]")
        if self.group_by not in ("true_label", "predicted_label"):
            raise ValueError(f"unknown group_by {self.group_by!r}")
        object.__setattr__(self, "grid", g)


def predicted_scores(g, h, labeled: LabeledSet):
    """(score of predicted class, predictions, wrong flags) for a labeled set."""
    X = labeled.features
    preds = h.predict(X)
    scores = g.scores(X)
    top = scores[np.arange(len(labeled)), preds]
    wrong = labeled.labels != preds
    return top, preds, wrong


def _per_point_thresholds(t, predicted: np.ndarray) -> np.ndarray:
    if isinstance(t, ThresholdVector):
        return t.per_point(predicted)
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(predicted.shape, float(arr))
    return arr[np.asarray(predicted, dtype=np.int64)]


def empirical_coverage(g, t, h, labeled: LabeledSet) -> float:
    """Fraction of points whose predicted-class confidence clears its threshold."""
    if len(labeled) == 0:
        raise ValueError("empty set")
    top, preds, _ = predicted_scores(g, h, labeled)
    return float(np.mean(top >= _per_point_thresholds(t, preds)))


def empirical_error(g, t, h, labeled: LabeledSet):
    """Error among selected points; None when nothing is selected."""
    if len(labeled) == 0:
        raise ValueError("empty set")
    top, preds, wrong = predicted_scores(g, h, labeled)
    sel = top >= _per_point_thresholds(t, preds)
    m = int(sel.sum())
    if m == 0:
        return None
    return float(wrong[sel].sum() / m)


def std_estimate(err_hat: float, m: int) -> float:
    """Binomial standard error sqrt(p(1-p)/m) of an error estimate on m points."""
    if m < 1:
        raise ValueError("need at least one selected point")
    if not (0.0 <= err_hat <= 1.0):
        raise ValueError("err_hat must be in [0, 1]")
    return float(np.sqrt(err_hat * (1.0 - err_hat) / m))


def select_class_threshold(top: np.ndarray, wrong: np.ndarray,
                           cfg: ThresholdConfig) -> float:
    """Smallest grid threshold for one class group, +inf when none qualifies.

    A grid value t qualifies when (a) it selects at least rho0 of the group
    and (b) the selected error plus c1 binomial-std safety stays within eps_a.
    """
    n = top.shape[0]
    if n == 0:
        return np.inf
    for t in cfg.grid:
        sel = top >= t
        m = int(sel.sum())
        if m / n < cfg.rho0:
            continue
        if m == 0:
            continue
        err = float(wrong[sel].sum() / m)
        if err + cfg.c1 * std_estimate(err, m) <= cfg.eps_a:
            return float(t)
    return np.inf


def estimate_thresholds(g, h, d_th: LabeledSet,
                        cfg: ThresholdConfig) -> ThresholdVector:
    """Per-class thresholds from held-out labeled data.

    Points are grouped per cfg.group_by; each class picks the smallest grid
    threshold whose in-group coverage reaches rho0 and whose safety-padded
    error estimate stays within eps_a. Classes with no qualifying threshold
    (including empty groups) get +inf and auto-label nothing.
    """
    if len(d_th) == 0:
        raise ValueError("empty threshold-estimation set")
    k = d_th.dataset.num_classes
    top, preds, wrong = predicted_scores(g, h, d_th)
    group_key = d_th.labels if cfg.group_by == "true_label" else preds
    out = np.full(k, np.inf)
    for y in range(k):
        sel = group_key == y
        out[y] = select_class_threshold(top[sel], wrong[sel], cfg)
    return ThresholdVector(out)
