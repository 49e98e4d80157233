"""Ground-truth evaluation: final run metrics, Monte-Carlo population
estimates, and a 1-D analytic world where every quantity has a closed form.

The toy world: x ~ Uniform(0,1), truth y = 1(x >= 0.5), a fixed classifier
predicting 1(x >= 0.25), and a one-parameter confidence g_w(x) = |w - x|.
All metrics restrict to the predict-1 side [0.25, 1], where selection regions
are unions of at most two intervals, so coverage and selection error are exact
ratios of interval lengths. The smoothed counterparts replace the selection
indicator 1(|w-x| >= t) with sigmoid(alpha, |w-x| - t) and are integrated
numerically to tight absolute tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .confidence import sigmoid
from .data import Dataset


@dataclass(frozen=True)
class McMetrics:
    coverage: float
    coverage_se: float
    error: float | None
    error_se: float | None
    n_selected: int


def final_metrics(report, truth: Dataset):
    """(error over auto-labeled points, coverage of the initial pool).

    Error compares assigned labels to the hidden labels of ``truth``, matched
    by point id; it is None when nothing was auto-labeled. Coverage divides by
    the initial unlabeled pool size recorded in the report.
    """
    out = report.output
    auto_mask = out.sources == "auto"
    n_auto = int(auto_mask.sum())
    coverage = n_auto / report.n_initial_pool
    if n_auto == 0:
        return None, coverage
    auto_ids = out.ids[auto_mask]
    order = np.argsort(truth.ids, kind="stable")
    pos = np.searchsorted(truth.ids[order], auto_ids)
    if np.any(pos >= truth.n) or np.any(truth.ids[order][np.minimum(pos, truth.n - 1)] != auto_ids):
        raise ValueError("auto-labeled ids not found in the truth dataset")
    true_labels = truth.hidden_labels[order][pos]
    error = float(np.mean(out.labels[auto_mask] != true_labels))
    return error, coverage


def mc_population_metrics(g, t, h, sampler, n: int, seed: int) -> McMetrics:
    """Plug-in estimates of population coverage and selection error.

    ``sampler(rng, n)`` must return (X, true_labels) drawn from the population.
    ``g``/``h`` are confidence and classifier objects (``scores``/``predict``)
    or plain callables with those meanings. Standard errors use the binomial
    formula; the error estimate is None when no sample is selected.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    X, y = sampler(rng, n)
    predict = h.predict if hasattr(h, "predict") else h
    score = g.scores if hasattr(g, "scores") else g
    preds = np.asarray(predict(X))
    scores = np.asarray(score(X))
    top = scores[np.arange(n), preds]
    from .thresholds import _per_point_thresholds
    sel = top >= _per_point_thresholds(t, preds)
    m = int(sel.sum())
    cov = m / n
    cov_se = float(np.sqrt(cov * (1.0 - cov) / n))
    if m == 0:
        return McMetrics(cov, cov_se, None, None, 0)
    err = float(np.mean(np.asarray(y)[sel] != preds[sel]))
    err_se = float(np.sqrt(err * (1.0 - err) / m))
    return McMetrics(cov, cov_se, err, err_se, m)


# ---------------------------------------------------------------------------
# the exact 1-D world


@dataclass(frozen=True)
class Toy1DWorld:
    """Uniform x on [0,1]; truth flips at 0.5, the classifier at 0.25."""

    w: float
    theta_true: float = 0.5
    theta_pred: float = 0.25

    @property
    def side(self) -> tuple[float, float]:
        """The predict-1 region the metrics restrict to."""
        return (self.theta_pred, 1.0)

    def confidence(self, x):
        return np.abs(self.w - np.asarray(x))

    def predict(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X).reshape(-1)
        return (x >= self.theta_pred).astype(np.int64)

    def scores(self, X: np.ndarray) -> np.ndarray:
        """2-column score matrix carrying |w-x| for whichever class is read."""
        x = np.asarray(X).reshape(-1)
        c = self.confidence(x)
        return np.stack([c, c], axis=1)

    def sample_side(self, rng: np.random.Generator, n: int):
        """(X, y) uniform on the predict-1 side; X is (n, 1)."""
        lo, hi = self.side
        x = rng.uniform(lo, hi, size=n)
        y = (x >= self.theta_true).astype(np.int64)
        return x[:, None], y


@dataclass(frozen=True)
class ToyMetrics:
    actual_coverage: float
    actual_error: float | None
    surrogate_coverage: float
    surrogate_error: float | None


def default_toy_sweep():
    """Standard (w values, t values) for the tightness sweep.

    w covers [0, 1] in steps of 0.02. t stops at the wrong-region width 0.25:
    beyond roughly 0.3 the selected set on the 0.75-long side approaches
    measure zero and the smoothed error ratio is dominated by sigmoid tail
    mass, which says nothing about how the smoothing tightens.
    """
    return (np.round(np.linspace(0.0, 1.0, 51), 12),
            np.round(np.linspace(0.0, 0.25, 6), 12))


def _selected_intervals(world: Toy1DWorld, t: float):
    """{x in side : |w-x| >= t} as a list of disjoint intervals."""
    lo, hi = world.side
    w = world.w
    pieces = []
    left_hi = min(hi, w - t)
    if left_hi > lo:
        pieces.append((lo, left_hi))
    right_lo = max(lo, w + t)
    if right_lo < hi:
        pieces.append((right_lo, hi))
    if not pieces:
        return []
    if len(pieces) == 2 and pieces[0][1] >= pieces[1][0]:
        # t == 0 makes the halves meet; merge to one interval
        return [(pieces[0][0], pieces[1][1])]
    return pieces


def _overlap(a, b) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def toy_1d_metrics(world: Toy1DWorld, t: float, alpha: float) -> ToyMetrics:
    """Exact and smoothed coverage/error of thresholding |w-x| at t.

    Actual values are interval-length ratios on the predict-1 side; the
    mistake region there is [theta_pred, theta_true). Smoothed values weight
    each x by sigmoid(alpha, |w-x| - t) and integrate with breakpoints at the
    kinks {w-t, w, w+t}.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    lo, hi = world.side
    side_len = hi - lo
    wrong_iv = (world.theta_pred, world.theta_true)
    pieces = _selected_intervals(world, t)
    sel_len = sum(b - a for a, b in pieces)
    actual_cov = sel_len / side_len
    if sel_len > 0:
        actual_err = sum(_overlap(p, wrong_iv) for p in pieces) / sel_len
    else:
        actual_err = None

    def weight(x):
        return sigmoid(alpha, abs(world.w - x) - t)

    kinks = sorted({world.w - t, world.w, world.w + t})
    pts = [p for p in kinks if lo < p < hi]
    wrong_pts = [p for p in pts if wrong_iv[0] < p < wrong_iv[1]]
    total, _ = quad(weight, lo, hi, points=pts or None, epsabs=1e-8, limit=200)
    wrong_mass, _ = quad(weight, wrong_iv[0], wrong_iv[1],
                         points=wrong_pts or None, epsabs=1e-8, limit=200)
    surrogate_cov = total / side_len
    surrogate_err = wrong_mass / total if total > 0 else None
    return ToyMetrics(actual_cov, actual_err, surrogate_cov, surrogate_err)
