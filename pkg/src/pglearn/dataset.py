"""Point-cloud datasets, labeled/validation/test splits, and noise injection.

On-disk formats:

* dataset CSV: UTF-8, comma-separated, optional header row. The label column
  is selected by name (requires a header) or 0-based position. An empty
  label cell or "?" marks an unlabeled point.
* split JSON: ``{"labeled": [...], "validation": [...], "unlabeled": [...]}``
  of 0-based indices.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

UNLABELED = 0  # sentinel in the labels vector; real classes are 1..c


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix with optional 1..c class labels.

    ``labels[i] == 0`` means point i is unlabeled. ``noise_columns`` records
    which feature columns were injected by :func:`inject_noise_features`.
    """

    features: np.ndarray
    labels: np.ndarray
    c: int
    noise_columns: tuple = ()

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "features", feats)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n, d = feats.shape
        if n < 2 or d < 1:
            raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite feature")
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per point")
        if labels.min(initial=0) < 0 or labels.max(initial=0) > self.c:
            raise ValueError("labels must lie in 1..c (0 = unlabeled)")
        if self.c < 2:
            raise ValueError("fewer than 2 distinct classes among labeled rows")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Index sets: labeled pool, validation subset of it, and the unlabeled rest."""

    labeled: np.ndarray
    validation: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        for name in ("labeled", "validation", "unlabeled"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)
        lab, val, unl = set(self.labeled), set(self.validation), set(self.unlabeled)
        if len(lab) != self.labeled.size or len(unl) != self.unlabeled.size:
            raise ValueError("duplicate indices in split")
        if lab & unl:
            raise ValueError("labeled and unlabeled sets overlap")
        if not val <= lab:
            raise ValueError("validation must be a subset of labeled")

    def check(self, dataset):
        n = dataset.n
        if set(self.labeled) | set(self.unlabeled) != set(range(n)):
            raise ValueError("split does not cover the dataset")
        covered = set(dataset.labels[self.labeled])
        covered.discard(UNLABELED)
        if covered != set(range(1, dataset.c + 1)):
            raise ValueError("labeled set does not cover every class")


def load_dataset(path, label_column):
    """Read a dataset CSV; label classes are remapped to 1..c in first-appearance order."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"empty dataset file: {path}")

    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("inconsistent column count")

    if isinstance(label_column, str):
        header = [cell.strip() for cell in rows[0]]
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
        body = rows[1:]
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < width:
            raise ValueError(f"label column position {label_idx} out of range")
        body = rows[1:] if _looks_like_header(rows[0], label_idx) else rows

    if not body:
        raise ValueError("no data rows")

    feats = np.empty((len(body), width - 1))
    raw_labels = []
    feat_cols = [j for j in range(width) if j != label_idx]
    for i, row in enumerate(body):
        for out_j, j in enumerate(feat_cols):
            cell = row[j].strip()
            try:
                feats[i, out_j] = float(cell)
            except ValueError:
                raise ValueError(f"non-numeric feature at row {i}, column {j}: {cell!r}") from None
        raw_labels.append(row[label_idx].strip())
    if not np.all(np.isfinite(feats)):
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise ValueError(f"non-finite feature at row {bad[0]}, feature column {bad[1]}")

    class_of = {}
    labels = np.zeros(len(body), dtype=np.int64)
    for i, raw in enumerate(raw_labels):
        if raw in ("", "?"):
            continue
        if raw not in class_of:
            class_of[raw] = len(class_of) + 1
        labels[i] = class_of[raw]
    if len(class_of) < 2:
        raise ValueError("fewer than 2 distinct classes among labeled rows")
    return Dataset(feats, labels, c=len(class_of))


def _looks_like_header(row, label_idx):
    for j, cell in enumerate(row):
        if j == label_idx:
            continue
        try:
            float(cell)
        except ValueError:
            return True
    return False


def save_dataset_csv(path, dataset, feature_names=None):
    """Write a dataset back out in the loadable CSV format (label column last)."""
    d = dataset.d
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(feature_names) + ["label"])
        for i in range(dataset.n):
            lab = str(dataset.labels[i]) if dataset.labels[i] != UNLABELED else "?"
            w.writerow([repr(float(v)) for v in dataset.features[i]] + [lab])


def sample_split(dataset, labeled_fraction, validation_fraction_of_labeled, rng_seed):
    """Draw a labeled set (every class present) and a validation subset of it.

    Requires every point to carry a true label (benchmark mode). Deterministic
    for a fixed seed.
    """
    if not 0 < labeled_fraction < 1:
        raise ValueError("labeled_fraction must lie in (0, 1)")
    if not 0 < validation_fraction_of_labeled < 1:
        raise ValueError("validation_fraction_of_labeled must lie in (0, 1)")
    if np.any(dataset.labels == UNLABELED):
        raise ValueError("sample_split requires a fully labeled dataset")

    n, c = dataset.n, dataset.c
    l = math.ceil(labeled_fraction * n)
    if l < c:
        raise ValueError(f"infeasible class coverage: {l} labeled slots < {c} classes")

    rng = np.random.default_rng(rng_seed)
    labeled = _covered_subset(rng, np.arange(n), dataset.labels, l, c)
    v_size = max(c, math.ceil(validation_fraction_of_labeled * l))
    validation = _covered_subset(rng, labeled, dataset.labels[labeled], v_size, c)
    mask = np.ones(n, dtype=bool)
    mask[labeled] = False
    return SplitSpec(np.sort(labeled), np.sort(validation), np.flatnonzero(mask))


def _covered_subset(rng, pool, pool_labels, size, c, max_tries=1000):
    """Uniform size-`size` subset of pool with every class of pool_labels present."""
    for _ in range(max_tries):
        pick = rng.choice(pool.size, size=size, replace=False)
        if np.unique(pool_labels[pick]).size == c:
            return pool[pick]
    # constructive fallback: one representative per class, rest uniform
    chosen = []
    for cls in range(1, c + 1):
        members = np.flatnonzero(pool_labels == cls)
        chosen.append(rng.choice(members))
    chosen = np.array(chosen)
    rest = np.setdiff1d(np.arange(pool.size), chosen)
    extra = rng.choice(rest, size=size - c, replace=False)
    return pool[np.concatenate([chosen, extra])]


def inject_noise_features(dataset, noise_fraction, rng_seed):
    """Append ceil(noise_fraction * d) standard-normal feature columns."""
    if noise_fraction <= 0:
        raise ValueError("noise_fraction must be positive")
    d = dataset.d
    extra = math.ceil(noise_fraction * d)
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal((dataset.n, extra))
    feats = np.hstack([dataset.features, noise])
    noise_cols = tuple(dataset.noise_columns) + tuple(range(d, d + extra))
    return Dataset(feats, dataset.labels.copy(), c=dataset.c, noise_columns=noise_cols)


def build_label_matrix(dataset, split, include_validation):
    """One-hot n x c matrix of diffusion sources.

    Rows for labeled-minus-validation points are one-hot; validation rows are
    one-hot only when ``include_validation``; everything else is zero.
    """
    Y = np.zeros((dataset.n, dataset.c))
    if include_validation:
        sources = split.labeled
    else:
        sources = np.setdiff1d(split.labeled, split.validation)
    for i in sources:
        if dataset.labels[i] != UNLABELED:
            Y[i, dataset.labels[i] - 1] = 1.0
    return Y


def save_split(path, split):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "labeled": split.labeled.tolist(),
                "validation": split.validation.tolist(),
                "unlabeled": split.unlabeled.tolist(),
            },
            fh,
        )


def load_split(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return SplitSpec(
        np.array(obj["labeled"], dtype=np.int64),
        np.array(obj["validation"], dtype=np.int64),
        np.array(obj["unlabeled"], dtype=np.int64),
    )
