"""The auto-labeling workflow.

Each round: train a classifier on the human labels gathered so far, split the
surviving validation data into a calibration half (fits the confidence
function) and a threshold half (estimates per-class thresholds with a safety
margin), auto-label every pool point whose predicted-class confidence clears
its class threshold, drop validation points in that same region, then spend
the next slice of the human budget on uncertain pool points. Rounds repeat
until the pool empties or the train-label budget is spent.

All randomness flows from the config's master seed through per-(round,
purpose) child streams, so runs are bit-reproducible and changing, say, the
post-hoc method never perturbs the query draws.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .confidence import (
    ConfidenceNetConfig,
    SoftmaxConfidence,
    TemperatureScalingConfig,
    TopLabelBinningConfig,
    fit_confidence_net,
    fit_temperature,
    fit_top_label_hb,
)
from .data import Dataset, LabeledSet, Pool, random_query, random_split
from .mlp import TrainConfig, margin_scores, softmax, train_model
from .rng import child_seed
from .thresholds import (
    ThresholdConfig,
    ThresholdVector,
    default_grid,
    estimate_thresholds,
    predicted_scores,
    _per_point_thresholds,
)

POSTHOC_METHODS = ("softmax", "temperature", "top_label_hb", "confidence_net")


@dataclass(frozen=True)
class TbalConfig:
    """Everything one workflow run needs besides the data itself."""

    train_budget: int
    seed_size: int
    query_batch: int
    eps_a: float = 0.05
    cal_fraction: float = 0.5
    coverage_floor: float = 0.05
    c1: float = 0.25
    grid: np.ndarray | None = None
    group_by: str = "true_label"
    hidden: tuple = (32,)
    train: TrainConfig = field(default_factory=TrainConfig)
    posthoc_method: str = "softmax"
    posthoc: object = None
    active_multiplier: float = 2.0
    master_seed: int = 0

    def __post_init__(self):
        if self.seed_size < 1 or self.seed_size > self.train_budget:
            raise ValueError("need 1 <= seed_size <= train_budget")
        if self.query_batch < 1:
            raise ValueError("query_batch must be >= 1")
        if not (0.0 <= self.eps_a <= 1.0):
            raise ValueError("eps_a must be in [0, 1]")
        if not (0.0 < self.cal_fraction < 1.0):
            raise ValueError("cal_fraction must be in (0, 1)")
        if self.active_multiplier < 1.0:
            raise ValueError("active_multiplier must be >= 1")
        if not self.hidden:
            raise ValueError("need at least one hidden layer width")
        if self.posthoc_method not in POSTHOC_METHODS:
            raise ValueError(f"unknown posthoc method {self.posthoc_method!r}")
        expected = {
            "softmax": type(None),
            "temperature": (TemperatureScalingConfig, type(None)),
            "top_label_hb": (TopLabelBinningConfig, type(None)),
            "confidence_net": (ConfidenceNetConfig, type(None)),
        }[self.posthoc_method]
        if not isinstance(self.posthoc, expected):
            raise ValueError(
                f"posthoc config {type(self.posthoc).__name__} does not match "
                f"method {self.posthoc_method!r}"
            )

    def threshold_config(self) -> ThresholdConfig:
        grid = self.grid if self.grid is not None else default_grid()
        return ThresholdConfig(grid=grid, rho0=self.coverage_floor, c1=self.c1,
                               eps_a=self.eps_a, group_by=self.group_by)


@dataclass
class RoundRecord:
    """What one round did; wall_time_s stays out of serialized logs."""

    round_index: int
    n_train: int
    n_val: int
    n_cal: int
    n_th: int
    thresholds: ThresholdVector
    n_auto: int
    n_queried: int
    n_pool_remaining: int
    auto_error: float | None
    auto_coverage: float
    wall_time_s: float

    def to_jsonable(self) -> dict:
        return {
            "round_index": self.round_index,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_cal": self.n_cal,
            "n_th": self.n_th,
            "thresholds": self.thresholds.to_jsonable(),
            "n_auto": self.n_auto,
            "n_queried": self.n_queried,
            "n_pool_remaining": self.n_pool_remaining,
            "auto_error": self.auto_error,
            "auto_coverage": self.auto_coverage,
        }


@dataclass
class TbalReport:
    rounds: "list[RoundRecord]"
    output: LabeledSet
    n_initial_pool: int
    final_error: float | None
    final_coverage: float
    warnings: "list[str]"

    def to_jsonable(self) -> dict:
        out = self.output
        return {
            "n_initial_pool": self.n_initial_pool,
            "final_error": self.final_error,
            "final_coverage": self.final_coverage,
            "n_rounds": len(self.rounds),
            "warnings": list(self.warnings),
            "rounds": [r.to_jsonable() for r in self.rounds],
            "output": {
                "ids": [int(v) for v in out.ids],
                "labels": [int(v) for v in out.labels],
                "sources": [str(v) for v in out.sources],
                "rounds": [int(v) for v in out.rounds],
            },
        }


# ---------------------------------------------------------------------------
# per-round pieces


def auto_label_select(g, t: ThresholdVector, h, pool: Pool,
                      round_index: int) -> tuple[LabeledSet, Pool]:
    """Label-and-remove every pool point whose confidence clears its threshold.

    Selected points receive the classifier's prediction as their label, tagged
    source "auto".
    """
    if pool.size == 0:
        return LabeledSet.empty(pool.dataset), pool
    X = pool.features
    preds = h.predict(X)
    scores = g.scores(X)
    top = scores[np.arange(pool.size), preds]
    sel = top >= _per_point_thresholds(t, preds)
    chosen = pool.active[sel]
    labeled = LabeledSet(
        dataset=pool.dataset,
        indices=chosen,
        labels=np.asarray(preds[sel], dtype=np.int64),
        sources=np.full(chosen.shape, "auto", dtype="<U5"),
        rounds=np.full(chosen.shape, round_index, dtype=np.int64),
    )
    return labeled, pool.without(chosen)


def filter_validation(g, t: ThresholdVector, h, val: LabeledSet) -> LabeledSet:
    """Keep only validation points BELOW threshold; labels stay untouched."""
    if len(val) == 0:
        return val
    top, preds, _ = predicted_scores(g, h, val)
    keep = np.flatnonzero(top < _per_point_thresholds(t, preds))
    return val.take(keep)


def active_query(h, pool: Pool, n_b: int, C: float, seed: int,
                 round_index: int) -> tuple[LabeledSet, Pool]:
    """Margin-random querying: sample n_b points among the C*n_b least-margin.

    Margins always come from the classifier's raw softmax, whatever post-hoc
    confidence the round used. Ties in margin break by pool index so the
    candidate set is deterministic.
    """
    if pool.size == 0:
        raise ValueError("cannot query an empty pool")
    margins = margin_scores(softmax(h.logits(pool.features)))
    n_cand = min(int(C * n_b + 1e-9), pool.size)
    order = np.lexsort((pool.active, margins))
    candidates = pool.active[order[:n_cand]]
    take = min(n_b, n_cand)
    rng = np.random.default_rng(seed)
    pick = rng.choice(n_cand, size=take, replace=False)
    chosen = np.sort(candidates[pick])
    labeled = LabeledSet.from_oracle(pool.dataset, chosen, round_index, "human")
    return labeled, pool.without(chosen)


def fit_posthoc(method: str, posthoc_cfg, model, d_cal: LabeledSet,
                seed: int):
    """Fit the round's confidence function on calibration data.

    Returns (model_g, warning-or-None). When histogram binning lacks enough
    calibration points it degrades to raw softmax with a warning instead of
    aborting the run.
    """
    if method == "softmax":
        return SoftmaxConfidence(model), None
    if method == "temperature":
        cfg = posthoc_cfg or TemperatureScalingConfig()
        return fit_temperature(model, d_cal, cfg.learning_rate, cfg.epochs), None
    if method == "top_label_hb":
        cfg = posthoc_cfg or TopLabelBinningConfig()
        if len(d_cal) < cfg.points_per_bin:
            return SoftmaxConfidence(model), (
                f"calibration set ({len(d_cal)}) smaller than points_per_bin "
                f"({cfg.points_per_bin}); using raw softmax this round"
            )
        return fit_top_label_hb(model, d_cal, cfg.points_per_bin), None
    if method == "confidence_net":
        cfg = posthoc_cfg or ConfidenceNetConfig()
        cfg = dataclasses.replace(cfg, seed=seed)
        fitted, _ = fit_confidence_net(model, d_cal, cfg)
        return fitted, None
    raise ValueError(f"unknown posthoc method {method!r}")


def fit_round(cfg: TbalConfig, d_train: LabeledSet, val: LabeledSet,
              round_index: int, dims):
    """Train + split + fit confidence + estimate thresholds for one round.

    Returns (model, g, thresholds, d_cal, d_th, warning-or-None). Shared by
    the main loop and by first-round-only hyperparameter search.
    """
    train_cfg = dataclasses.replace(
        cfg.train, seed=child_seed(cfg.master_seed, round_index, "train"))
    model = train_model(train_cfg, d_train, dims)
    d_cal, d_th = random_split(
        val, cfg.cal_fraction, child_seed(cfg.master_seed, round_index, "split"))
    g, warning = fit_posthoc(cfg.posthoc_method, cfg.posthoc, model, d_cal,
                             child_seed(cfg.master_seed, round_index, "posthoc"))
    t_hat = estimate_thresholds(g, model, d_th, cfg.threshold_config())
    return model, g, t_hat, d_cal, d_th, warning


# ---------------------------------------------------------------------------
# the loop


def run_tbal(cfg: TbalConfig, pool_data: Dataset, d_val: LabeledSet,
             round_hook=None) -> TbalReport:
    """Run the full workflow on an unlabeled pool plus human validation data.

    ``round_hook(round_index, model, g, t_hat, val)``, when given, observes
    each round (used by the runner to dump per-round score files); it must not
    mutate anything.
    """
    if cfg.seed_size > pool_data.n:
        raise ValueError("seed_size exceeds pool size")
    if len(d_val) < 2:
        raise ValueError("need at least 2 validation points")
    dims = [pool_data.dim, *cfg.hidden, pool_data.num_classes]
    pool = Pool.full(pool_data)
    seed_set, pool = random_query(
        pool, cfg.seed_size, child_seed(cfg.master_seed, 0, "seed_query"),
        round_index=0)
    d_train = seed_set
    out = seed_set
    val = d_val
    n_t = cfg.seed_size
    records: list[RoundRecord] = []
    warnings: list[str] = []
    i = 1
    while pool.size > 0 and n_t <= cfg.train_budget:
        if len(val) < 2:
            warnings.append(
                f"round {i}: validation exhausted ({len(val)} point(s) left); "
                "stopping with pool unlabeled")
            break
        t0 = time.perf_counter()
        model, g, t_hat, d_cal, d_th, warn = fit_round(cfg, d_train, val, i, dims)
        if warn:
            warnings.append(f"round {i}: {warn}")
        if round_hook is not None:
            round_hook(i, model, g, t_hat, val)
        pool_before = pool.size
        auto_set, pool = auto_label_select(g, t_hat, model, pool, i)
        val = filter_validation(g, t_hat, model, val)
        if pool.size > 0:
            query, pool = active_query(
                model, pool, cfg.query_batch, cfg.active_multiplier,
                child_seed(cfg.master_seed, i, "active"), round_index=i)
        else:
            query = LabeledSet.empty(pool_data)
        out = out.merged_with(auto_set).merged_with(query)
        d_train = d_train.merged_with(query)
        if len(auto_set):
            truth = pool_data.hidden_labels[auto_set.indices]
            auto_err = float(np.mean(auto_set.labels != truth))
        else:
            auto_err = None
        records.append(RoundRecord(
            round_index=i,
            n_train=len(d_train),
            n_val=len(val),
            n_cal=len(d_cal),
            n_th=len(d_th),
            thresholds=t_hat,
            n_auto=len(auto_set),
            n_queried=len(query),
            n_pool_remaining=pool.size,
            auto_error=auto_err,
            auto_coverage=len(auto_set) / pool_before,
            wall_time_s=time.perf_counter() - t0,
        ))
        n_t += cfg.query_batch
        i += 1
    auto_mask = out.sources == "auto"
    n_auto = int(auto_mask.sum())
    if n_auto:
        truth = pool_data.hidden_labels[out.indices[auto_mask]]
        final_error = float(np.mean(out.labels[auto_mask] != truth))
    else:
        final_error = None
    return TbalReport(
        rounds=records,
        output=out,
        n_initial_pool=pool_data.n,
        final_error=final_error,
        final_coverage=n_auto / pool_data.n,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# serialization


def dump_round_log(report: TbalReport, path: str) -> None:
    """One JSON object per round, byte-stable across reruns."""
    with open(path, "w") as f:
        for rec in report.rounds:
            f.write(json.dumps(rec.to_jsonable(), sort_keys=True))
            f.write("\n")


def dump_report(report: TbalReport, path: str) -> None:
    with open(path, "w") as f:
        json.dump(report.to_jsonable(), f, sort_keys=True, indent=2)
        f.write("\n")
