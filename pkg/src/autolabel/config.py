"""Experiment configuration: JSON on disk, validated dataclasses in memory.

Parsing is strict: unknown keys, missing required keys, type mismatches, and
out-of-range values are all distinct errors naming the full key path, so a
typo can never silently fall back to a default. The grammar is documented in
the README.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .confidence import (
    ConfidenceNetConfig,
    TemperatureScalingConfig,
    TopLabelBinningConfig,
)
from .loop import TbalConfig
from .mlp import TrainConfig


class ConfigError(ValueError):
    """Base for all configuration problems."""


class MissingKeyError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class TypeMismatchError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


_REQUIRED = object()


class _Section:
    """One JSON object being consumed key by key."""

    def __init__(self, mapping, path: str):
        if not isinstance(mapping, dict):
            raise TypeMismatchError(f"{path}: expected an object")
        self.mapping = mapping
        self.path = path
        self.seen: set = set()

    def _fetch(self, key, default):
        if key not in self.mapping:
            if default is _REQUIRED:
                raise MissingKeyError(f"{self.path}.{key}: required key missing")
            return default, False
        self.seen.add(key)
        return self.mapping[key], True

    def number(self, key, default=_REQUIRED, lo=None, hi=None,
               integer=False):
        val, present = self._fetch(key, default)
        if not present:
            return val
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise TypeMismatchError(f"{self.path}.{key}: expected a number")
        if integer and not isinstance(val, int):
            raise TypeMismatchError(f"{self.path}.{key}: expected an integer")
        if lo is not None and val < lo or hi is not None and val > hi:
            raise RangeError(
                f"{self.path}.{key}: value {val} outside [{lo}, {hi}]"
            )
        return int(val) if integer else float(val)

    def string(self, key, default=_REQUIRED, choices=None):
        val, present = self._fetch(key, default)
        if not present:
            return val
        if not isinstance(val, str):
            raise TypeMismatchError(f"{self.path}.{key}: expected a string")
        if choices is not None and val not in choices:
            raise RangeError(
                f"{self.path}.{key}: {val!r} not one of {sorted(choices)}"
            )
        return val

    def list_of_numbers(self, key, default=_REQUIRED, integer=False):
        val, present = self._fetch(key, default)
        if not present:
            return val
        if not isinstance(val, list) or not val:
            raise TypeMismatchError(
                f"{self.path}.{key}: expected a non-empty list"
            )
        out = []
        for i, v in enumerate(val):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeMismatchError(
                    f"{self.path}.{key}[{i}]: expected a number"
                )
            if integer and not isinstance(v, int):
                raise TypeMismatchError(
                    f"{self.path}.{key}[{i}]: expected an integer"
                )
            out.append(int(v) if integer else float(v))
        return out

    def raw(self, key, default=_REQUIRED):
        val, _ = self._fetch(key, default)
        return val

    def section(self, key, required=True):
        if key not in self.mapping:
            if required:
                raise MissingKeyError(f"{self.path}.{key}: required key missing")
            return None
        self.seen.add(key)
        return _Section(self.mapping[key], f"{self.path}.{key}")

    def finish(self):
        unknown = sorted(set(self.mapping) - self.seen)
        if unknown:
            raise UnknownKeyError(
                f"{self.path}.{unknown[0]}: unknown key"
                + (f" (also: {', '.join(unknown[1:])})" if unknown[1:] else "")
            )


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int
    dim: int
    means: np.ndarray
    sigma: float
    pool_size: int
    val_size: int
    hyp_size: int


@dataclass(frozen=True)
class FileSpec:
    path: str
    format: str
    num_classes: int | None
    labels_path: str | None
    pool_size: int
    val_size: int
    hyp_size: int


@dataclass(frozen=True)
class HpoSpec:
    train_grid: dict
    posthoc_grid: dict
    tie_break_seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: "SyntheticSpec | FileSpec"
    tbal: TbalConfig
    repeats: int
    output_dir: str
    master_seed: int
    hpo: HpoSpec | None


def default_circle_means(classes: int, dim: int, radius: float = 3.0):
    """Class means evenly spaced on a circle in the first two dims."""
    if dim < 1:
        raise RangeError("dataset.dim: must be >= 1")
    means = np.zeros((classes, dim))
    if dim == 1:
        means[:, 0] = np.linspace(-radius, radius, classes)
    else:
        angles = 2.0 * np.pi * np.arange(classes) / classes
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
    return means


def _parse_dataset(sec: _Section, base_dir: str):
    kind = sec.string("kind", choices={"synthetic", "file"})
    pool_size = sec.number("pool_size", integer=True, lo=1)
    val_size = sec.number("val_size", integer=True, lo=2)
    hyp_size = sec.number("hyp_size", 0, integer=True, lo=0)
    if kind == "synthetic":
        classes = sec.number("classes", integer=True, lo=2)
        dim = sec.number("dim", integer=True, lo=1)
        sigma = sec.number("sigma", lo=0.0)
        if sigma <= 0:
            raise RangeError(f"{sec.path}.sigma: must be positive")
        means_raw = sec.raw("means", None)
        if means_raw is None:
            means = default_circle_means(classes, dim)
        else:
            try:
                means = np.asarray(means_raw, dtype=np.float64)
            except (TypeError, ValueError):
                raise TypeMismatchError(
                    f"{sec.path}.means: expected a {classes}x{dim} numeric array"
                ) from None
            if means.shape != (classes, dim):
                raise TypeMismatchError(
                    f"{sec.path}.means: shape {means.shape} != ({classes}, {dim})"
                )
        sec.finish()
        return SyntheticSpec(classes, dim, means, sigma, pool_size, val_size,
                             hyp_size)
    path = sec.string("path")
    fmt = sec.string("format", choices={"idx", "csv", "rawf32"})
    num_classes = sec.number("num_classes", None, integer=True, lo=2)
    labels_path = sec.string("labels_path", None)
    sec.finish()
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(resolved):
        raise ConfigError(f"{sec.path}.path: no such file {resolved!r}")
    if labels_path is not None:
        labels_resolved = (labels_path if os.path.isabs(labels_path)
                           else os.path.join(base_dir, labels_path))
        if not os.path.exists(labels_resolved):
            raise ConfigError(
                f"{sec.path}.labels_path: no such file {labels_resolved!r}"
            )
    else:
        labels_resolved = None
    return FileSpec(resolved, fmt, num_classes, labels_resolved, pool_size,
                    val_size, hyp_size)


def _build(path: str, ctor, **kwargs):
    """Construct a config dataclass, renaming its ValueError to a RangeError
    that carries the key path."""
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise RangeError(f"{path}: {exc}") from None


def _parse_train(sec: _Section) -> TrainConfig:
    if sec is None:
        return TrainConfig()
    cfg = _build(
        sec.path, TrainConfig,
        loss=sec.string("loss", "vanilla", choices={"vanilla", "squentropy"}),
        learning_rate=sec.number("learning_rate", 0.01, lo=0.0),
        momentum=sec.number("momentum", 0.9, lo=0.0, hi=1.0),
        weight_decay=sec.number("weight_decay", 0.0, lo=0.0),
        batch_size=sec.number("batch_size", 32, integer=True, lo=1),
        max_epochs=sec.number("max_epochs", 50, integer=True, lo=0),
    )
    sec.finish()
    return cfg


def _parse_posthoc(sec: _Section):
    if sec is None:
        return "softmax", None
    method = sec.string("method", choices={
        "softmax", "temperature", "top_label_hb", "confidence_net"})
    if method == "softmax":
        sec.finish()
        return method, None
    if method == "temperature":
        cfg = _build(
            sec.path, TemperatureScalingConfig,
            learning_rate=sec.number("learning_rate", 0.01, lo=0.0),
            epochs=sec.number("epochs", 500, integer=True, lo=0),
        )
        sec.finish()
        return method, cfg
    if method == "top_label_hb":
        cfg = _build(
            sec.path, TopLabelBinningConfig,
            points_per_bin=sec.number("points_per_bin", 25, integer=True, lo=1),
        )
        sec.finish()
        return method, cfg
    cfg = _build(
        sec.path, ConfidenceNetConfig,
        lam=sec.number("lam", 100.0, lo=0.0),
        alpha=sec.number("alpha", 1.0, lo=0.0),
        learning_rate=sec.number("learning_rate", 0.01, lo=0.0),
        weight_decay=sec.number("weight_decay", 0.01, lo=0.0),
        batch_size=sec.number("batch_size", 64, integer=True, lo=1),
        max_epochs=sec.number("max_epochs", 500, integer=True, lo=0),
        denom_epsilon=sec.number("denom_epsilon", 1e-8, lo=0.0),
    )
    sec.finish()
    return "confidence_net", cfg


_TRAIN_GRID_KEYS = {"loss", "learning_rate", "momentum", "weight_decay",
                    "batch_size", "max_epochs"}
_POSTHOC_GRID_KEYS = {
    "softmax": set(),
    "temperature": {"learning_rate", "epochs"},
    "top_label_hb": {"points_per_bin"},
    "confidence_net": {"lam", "alpha", "learning_rate", "weight_decay",
                       "batch_size", "max_epochs"},
}


def _parse_grid(sec: _Section, key: str, allowed: set) -> dict:
    raw = sec.raw(key, _REQUIRED)
    if not isinstance(raw, dict):
        raise TypeMismatchError(f"{sec.path}.{key}: expected an object of lists")
    grid = {}
    for name in sorted(raw):
        if name not in allowed:
            raise UnknownKeyError(
                f"{sec.path}.{key}.{name}: not a searchable hyperparameter"
            )
        vals = raw[name]
        if not isinstance(vals, list) or not vals:
            raise TypeMismatchError(
                f"{sec.path}.{key}.{name}: expected a non-empty list"
            )
        grid[name] = vals
    if not grid:
        raise RangeError(f"{sec.path}.{key}: grid must name at least one "
                         "hyperparameter")
    return grid


def _parse_hpo(sec: _Section, posthoc_method: str):
    if sec is None:
        return None
    train_grid = _parse_grid(sec, "train_grid", _TRAIN_GRID_KEYS)
    if posthoc_method == "softmax":
        # raw softmax has nothing to search; the phase is skipped
        if "posthoc_grid" in sec.mapping and sec.raw("posthoc_grid") not in ({}, None):
            raise RangeError(
                f"{sec.path}.posthoc_grid: softmax has no hyperparameters"
            )
        posthoc_grid = {}
    else:
        posthoc_grid = _parse_grid(sec, "posthoc_grid",
                                   _POSTHOC_GRID_KEYS[posthoc_method])
    tie = sec.number("tie_break_seed", 0, integer=True, lo=0)
    sec.finish()
    return HpoSpec(train_grid, posthoc_grid, tie)


def _parse_tbal(sec: _Section, master_seed: int) -> TbalConfig:
    train = _parse_train(sec.section("train", required=False))
    method, posthoc = _parse_posthoc(sec.section("posthoc", required=False))
    grid_size = sec.number("grid_size", None, integer=True, lo=2)
    grid_list = sec.list_of_numbers("grid", None)
    if grid_size is not None and grid_list is not None:
        raise ConfigError(f"{sec.path}.grid: give grid or grid_size, not both")
    if grid_list is not None:
        grid = np.asarray(grid_list, dtype=np.float64)
    elif grid_size is not None:
        grid = np.linspace(1.0 / grid_size, 1.0, grid_size)
    else:
        grid = None
    hidden_list = sec.list_of_numbers("hidden", [32], integer=True)
    kwargs = dict(
        train_budget=sec.number("train_budget", integer=True, lo=1),
        seed_size=sec.number("seed_size", integer=True, lo=1),
        query_batch=sec.number("query_batch", integer=True, lo=1),
        eps_a=sec.number("eps_a", 0.05, lo=0.0, hi=1.0),
        cal_fraction=sec.number("cal_fraction", 0.5),
        coverage_floor=sec.number("coverage_floor", 0.05, lo=0.0, hi=1.0),
        c1=sec.number("c1", 0.25, lo=0.0),
        grid=grid,
        group_by=sec.string("group_by", "true_label",
                            choices={"true_label", "predicted_label"}),
        hidden=tuple(hidden_list),
        train=train,
        posthoc_method=method,
        posthoc=posthoc,
        active_multiplier=sec.number("active_multiplier", 2.0, lo=1.0),
        master_seed=master_seed,
    )
    if not (0.0 < kwargs["cal_fraction"] < 1.0):
        raise RangeError(
            f"{sec.path}.cal_fraction: {kwargs['cal_fraction']} outside (0, 1)"
        )
    sec.finish()
    try:
        return TbalConfig(**kwargs)
    except ValueError as exc:
        raise RangeError(f"{sec.path}: {exc}") from None


def parse_config_dict(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    root = _Section(doc, "config")
    master_seed = root.number("master_seed", 0, integer=True, lo=0)
    repeats = root.number("repeats", 5, integer=True, lo=1)
    output_dir = root.string("output_dir", "out")
    dataset = _parse_dataset(root.section("dataset"), base_dir)
    tbal_sec = root.section("tbal")
    tbal = _parse_tbal(tbal_sec, master_seed)
    hpo = _parse_hpo(root.section("hpo", required=False), tbal.posthoc_method)
    root.finish()
    if hpo is not None and dataset.hyp_size < 1:
        raise RangeError(
            "config.dataset.hyp_size: must be >= 1 when hpo is configured"
        )
    if not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)
    return ExperimentConfig(dataset=dataset, tbal=tbal, repeats=repeats,
                            output_dir=output_dir, master_seed=master_seed,
                            hpo=hpo)


def parse_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path!r}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise TypeMismatchError(f"{path}: top level must be an object")
    return parse_config_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))
