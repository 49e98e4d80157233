"""Datasets, labeled subsets, pools, and file loaders.

A Dataset owns the feature matrix and the ground-truth labels. Ground truth is
stored under the name ``hidden_labels`` as a reminder that workflow code may
only look at it through an explicit oracle query (querying a human) or when
scoring a finished run; fitting code receives labels only via LabeledSet.

Supported on-disk formats:

* ``idx``     -- the classic big-endian binary image/label pair format
                 (magic 0x00000803 for images, 0x00000801 for labels).
* ``csv``     -- header row, feature columns first, final column ``label``.
* ``rawf32``  -- little-endian float32 feature block with a text sidecar
                 ``<path>.meta`` (``n=``/``d=``/``k=`` lines) and a
                 little-endian uint32 label block ``<path>.labels``.
"""

from __future__ import annotations

import csv as _csv
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import stream


class DataFormatError(ValueError):
    """Base class for malformed dataset files."""


class MagicNumberError(DataFormatError):
    """File does not start with the expected magic constant."""


class TruncatedPayloadError(DataFormatError):
    """File ends before the payload promised by its header."""


class RowCountMismatchError(DataFormatError):
    """Feature and label files disagree about the number of rows."""


class LabelOutOfRangeError(DataFormatError):
    """A label value falls outside [0, num_classes)."""


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Immutable feature/label store.

    features      : (n, d) float32
    hidden_labels : (n,) int64 ground truth; oracle access only
    num_classes   : k >= 2
    ids           : (n,) int64 stable unique point ids
    """

    features: np.ndarray
    hidden_labels: np.ndarray
    num_classes: int
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.asarray(self.hidden_labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise RowCountMismatchError(
                f"{feats.shape[0]} feature rows vs {labels.shape[0]} labels"
            )
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelOutOfRangeError(
                f"labels must lie in [0, {self.num_classes})"
            )
        ids = self.ids
        if ids is None:
            ids = np.arange(feats.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape != (feats.shape[0],):
                raise ValueError("ids must have one entry per row")
            if np.unique(ids).size != ids.size:
                raise ValueError("ids must be unique")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "hidden_labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        """New Dataset restricted to ``indices`` (ids preserved)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            hidden_labels=self.hidden_labels[idx],
            num_classes=self.num_classes,
            ids=self.ids[idx],
        )


@dataclass
class LabeledSet:
    """Rows of a Dataset together with assigned labels.

    Assigned labels come from the oracle (source "human") or from the
    auto-labeler (source "auto"); they need not match the hidden truth.
    """

    dataset: Dataset
    indices: np.ndarray  # (m,) int64 row indices into dataset, unique
    labels: np.ndarray   # (m,) int64 assigned labels
    sources: np.ndarray  # (m,) unicode, each "human" or "auto"
    rounds: np.ndarray   # (m,) int64 round stamp

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sources = np.asarray(self.sources, dtype="<U5")
        self.rounds = np.asarray(self.rounds, dtype=np.int64)
        m = self.indices.shape[0]
        if not (self.labels.shape == self.sources.shape == self.rounds.shape == (m,)):
            raise ValueError("index/label/source/round arrays must align")
        if m:
            if np.unique(self.indices).size != m:
                raise ValueError("duplicate indices in LabeledSet")
            if self.indices.min() < 0 or self.indices.max() >= self.dataset.n:
                raise IndexError("index out of range for dataset")
            if self.labels.min() < 0 or self.labels.max() >= self.dataset.num_classes:
                raise LabelOutOfRangeError("assigned label out of range")
            bad = set(np.unique(self.sources)) - {"human", "auto"}
            if bad:
                raise ValueError(f"unknown source tags: {sorted(bad)}")

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    @property
    def features(self) -> np.ndarray:
        return self.dataset.features[self.indices]

    @property
    def ids(self) -> np.ndarray:
        return self.dataset.ids[self.indices]

    @classmethod
    def empty(cls, dataset: Dataset) -> "LabeledSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(dataset, z, z.copy(), np.zeros(0, dtype="<U5"), z.copy())

    @classmethod
    def from_oracle(cls, dataset: Dataset, indices, round_index: int,
                    source: str = "human") -> "LabeledSet":
        """Label ``indices`` with the dataset's ground truth (an oracle query)."""
        idx = np.asarray(indices, dtype=np.int64)
        return cls(
            dataset=dataset,
            indices=idx,
            labels=dataset.hidden_labels[idx].copy(),
            sources=np.full(idx.shape, source, dtype="<U5"),
            rounds=np.full(idx.shape, round_index, dtype=np.int64),
        )

    def take(self, positions) -> "LabeledSet":
        """Subset by positions within this set (not dataset indices)."""
        pos = np.asarray(positions)
        if pos.size == 0:
            pos = pos.astype(np.int64)
        return LabeledSet(self.dataset, self.indices[pos], self.labels[pos],
                          self.sources[pos], self.rounds[pos])

    @staticmethod
    def concat(parts: "list[LabeledSet]") -> "LabeledSet":
        parts = [p for p in parts if len(p) > 0]
        if not parts:
            raise ValueError("concat of all-empty parts needs a dataset; use empty()")
        ds = parts[0].dataset
        for p in parts:
            if p.dataset is not ds:
                raise ValueError("cannot concat LabeledSets over different datasets")
        return LabeledSet(
            ds,
            np.concatenate([p.indices for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.sources for p in parts]),
            np.concatenate([p.rounds for p in parts]),
        )

    def merged_with(self, other: "LabeledSet") -> "LabeledSet":
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return LabeledSet.concat([self, other])


@dataclass
class Pool:
    """Unlabeled portion of a Dataset: the currently active row indices."""

    dataset: Dataset
    active: np.ndarray  # (m,) int64, unique, ascending

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=np.int64)
        if self.active.size:
            if np.unique(self.active).size != self.active.size:
                raise ValueError("duplicate indices in pool")
            if self.active.min() < 0 or self.active.max() >= self.dataset.n:
                raise IndexError("pool index out of range")

    @classmethod
    def full(cls, dataset: Dataset) -> "Pool":
        return cls(dataset, np.arange(dataset.n, dtype=np.int64))

    @property
    def size(self) -> int:
        return int(self.active.shape[0])

    @property
    def features(self) -> np.ndarray:
        return self.dataset.features[self.active]

    def without(self, indices) -> "Pool":
        """Pool minus ``indices`` (dataset row indices, must be active)."""
        drop = np.asarray(indices, dtype=np.int64)
        if drop.size == 0:
            return Pool(self.dataset, self.active.copy())
        mask = np.isin(self.active, drop)
        if mask.sum() != drop.size:
            raise ValueError("attempt to remove indices not in the pool")
        return Pool(self.dataset, self.active[~mask])


# ---------------------------------------------------------------------------
# sampling / splitting


def random_query(pool: Pool, n: int, seed: int,
                 round_index: int = 0) -> tuple[LabeledSet, Pool]:
    """Query the oracle for n uniform-random pool points.

    Returns the newly labeled set (source "human", indices ascending) and the
    shrunken pool.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > pool.size:
        raise ValueError(f"cannot query {n} points from a pool of {pool.size}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(pool.size, size=n, replace=False)
    chosen = np.sort(pool.active[pick])
    labeled = LabeledSet.from_oracle(pool.dataset, chosen, round_index, "human")
    return labeled, pool.without(chosen)


def random_split(labeled: LabeledSet, fraction: float,
                 seed: int) -> tuple[LabeledSet, LabeledSet]:
    """Split a labeled set into (first, second) parts.

    ``fraction`` is the share of points in the first part, rounded to the
    nearest integer but clamped so both parts are non-empty. Requires at least
    two points.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie strictly between 0 and 1")
    m = len(labeled)
    if m < 2:
        raise ValueError("need at least 2 points to split")
    size = int(np.floor(fraction * m + 0.5))
    size = min(max(size, 1), m - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    first = np.sort(perm[:size])
    second = np.sort(perm[size:])
    return labeled.take(first), labeled.take(second)


# ---------------------------------------------------------------------------
# synthesis


def synth_gaussian_mixture(num_classes: int, dim: int, means, sigma: float,
                           n: int, seed: int) -> Dataset:
    """Isotropic Gaussian blobs, one per class, near-equal class counts.

    ``means`` is (k, d). n is split as evenly as possible with the remainder
    going to the lowest class indices. Draws happen class by class from a
    single generator, so the result is reproducible for a given seed.
    """
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (num_classes, dim):
        raise ValueError(f"means must have shape ({num_classes}, {dim})")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n < num_classes:
        raise ValueError("need at least one point per class")
    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for c in range(num_classes):
        blocks.append(rng.normal(means[c], sigma, size=(counts[c], dim)))
        labels.append(np.full(counts[c], c, dtype=np.int64))
    feats = np.concatenate(blocks).astype(np.float32)
    labs = np.concatenate(labels)
    perm = rng.permutation(n)
    return Dataset(feats[perm], labs[perm], num_classes)


# ---------------------------------------------------------------------------
# loaders


def _read_exact(f, count: int, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise TruncatedPayloadError(
            f"{what}: expected {count} bytes, file ended after {len(buf)}"
        )
    return buf


def _load_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic, = struct.unpack(">i", _read_exact(f, 4, "idx image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise MagicNumberError(
                f"bad image magic 0x{magic & 0xFFFFFFFF:08x}, "
                f"want 0x{IDX_IMAGES_MAGIC:08x}"
            )
        count, rows, cols = struct.unpack(
            ">iii", _read_exact(f, 12, "idx image header")
        )
        if count < 0 or rows <= 0 or cols <= 0:
            raise DataFormatError(f"bad idx dims {count}x{rows}x{cols}")
        raw = _read_exact(f, count * rows * cols, "idx image payload")
        extra = f.read(1)
        if extra:
            raise DataFormatError("trailing bytes after idx image payload")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    return (pixels.astype(np.float32)) / 255.0


def _load_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic, = struct.unpack(">i", _read_exact(f, 4, "idx label header"))
        if magic != IDX_LABELS_MAGIC:
            raise MagicNumberError(
                f"bad label magic 0x{magic & 0xFFFFFFFF:08x}, "
                f"want 0x{IDX_LABELS_MAGIC:08x}"
            )
        count, = struct.unpack(">i", _read_exact(f, 4, "idx label header"))
        if count < 0:
            raise DataFormatError(f"negative idx label count {count}")
        raw = _read_exact(f, count, "idx label payload")
        if f.read(1):
            raise DataFormatError("trailing bytes after idx label payload")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def idx_labels_path(images_path: str) -> str:
    """Conventional companion-labels filename for an idx images file."""
    base = os.path.basename(images_path)
    cand = base.replace("idx3", "idx1").replace("images", "labels")
    if cand == base:
        raise FileNotFoundError(
            f"cannot derive a labels filename from {images_path!r}; "
            "pass labels_path explicitly"
        )
    return os.path.join(os.path.dirname(images_path), cand)


def _load_idx(path: str, num_classes, labels_path=None) -> Dataset:
    feats = _load_idx_images(path)
    lp = labels_path if labels_path is not None else idx_labels_path(path)
    labels = _load_idx_labels(lp)
    if labels.shape[0] != feats.shape[0]:
        raise RowCountMismatchError(
            f"{feats.shape[0]} images but {labels.shape[0]} labels"
        )
    k = int(num_classes) if num_classes else int(labels.max()) + 1
    return Dataset(feats, labels, k)


def _load_csv(path: str, num_classes) -> Dataset:
    with open(path, newline="") as f:
        reader = _csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty csv file") from None
        if not header or header[-1].strip() != "label":
            raise DataFormatError("last csv column must be named 'label'")
        width = len(header)
        if width < 2:
            raise DataFormatError("csv needs at least one feature column")
        feats = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"line {lineno}: {len(row)} fields, header has {width}"
                )
            try:
                feats.append([float(v) for v in row[:-1]])
            except ValueError:
                raise DataFormatError(
                    f"line {lineno}: non-numeric feature value"
                ) from None
            try:
                labels.append(int(row[-1]))
            except ValueError:
                raise DataFormatError(
                    f"line {lineno}: non-integer label {row[-1]!r}"
                ) from None
    if not feats:
        raise DataFormatError("csv has a header but no data rows")
    labs = np.asarray(labels, dtype=np.int64)
    k = int(num_classes) if num_classes else int(labs.max()) + 1
    return Dataset(np.asarray(feats, dtype=np.float32), labs, k)


def _parse_meta(path: str) -> dict:
    meta = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            try:
                meta[key.strip()] = int(val)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: non-integer value {val!r}"
                ) from None
    for key in ("n", "d", "k"):
        if key not in meta:
            raise DataFormatError(f"{path}: missing {key}=")
    return meta


def _load_rawf32(path: str, num_classes) -> Dataset:
    meta = _parse_meta(path + ".meta")
    n, d, k = meta["n"], meta["d"], meta["k"]
    if num_classes and int(num_classes) != k:
        raise DataFormatError(
            f"meta says k={k} but num_classes={num_classes} requested"
        )
    with open(path, "rb") as f:
        raw = _read_exact(f, n * d * 4, "rawf32 feature payload")
        if f.read(1):
            raise DataFormatError("trailing bytes after rawf32 features")
    feats = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    with open(path + ".labels", "rb") as f:
        raw = _read_exact(f, n * 4, "rawf32 label payload")
        if f.read(1):
            raise DataFormatError("trailing bytes after rawf32 labels")
    labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    if labels.size and labels.max() >= k:
        raise LabelOutOfRangeError(
            f"label {labels.max()} out of range for k={k}"
        )
    return Dataset(feats, labels, k)


def write_rawf32(dataset: Dataset, path: str) -> None:
    """Write the rawf32 trio (features, .meta, .labels) for ``dataset``."""
    feats = np.ascontiguousarray(dataset.features, dtype="<f4")
    labels = np.ascontiguousarray(dataset.hidden_labels, dtype="<u4")
    with open(path, "wb") as f:
        f.write(feats.tobytes())
    with open(path + ".meta", "w") as f:
        f.write(f"n={dataset.n}\nd={dataset.dim}\nk={dataset.num_classes}\n")
    with open(path + ".labels", "wb") as f:
        f.write(labels.tobytes())


_LOADERS = {"idx": _load_idx, "csv": _load_csv, "rawf32": _load_rawf32}


def load_dataset(path: str, format: str, num_classes: int | None = None,
                 labels_path: str | None = None) -> Dataset:
    """Load a Dataset from disk. ``format`` is one of idx | csv | rawf32."""
    if format not in _LOADERS:
        raise ValueError(
            f"unknown format {format!r}; expected one of {sorted(_LOADERS)}"
        )
    if format == "idx":
        return _load_idx(path, num_classes, labels_path)
    return _LOADERS[format](path, num_classes)


def carve(dataset: Dataset, sizes: "list[int]", seed: int) -> "list[Dataset]":
    """Disjoint random subsets with the given sizes; remainder is dropped.

    Used to split one source dataset into pool / validation / held-out parts.
    """
    total = int(np.sum(sizes))
    if total > dataset.n:
        raise ValueError(f"cannot carve {total} points from {dataset.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    out = []
    at = 0
    for s in sizes:
        out.append(dataset.subset(np.sort(perm[at:at + s])))
        at += s
    return out
