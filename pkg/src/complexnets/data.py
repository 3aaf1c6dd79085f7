"""Segmented-manifold classification datasets and tabular loading.

Points sampled on a swiss roll or an s curve are cut into
``n_classes * n_reps`` equal-count segments along the manifold's main
coordinate ``t``; segments are assigned to classes so that every class owns
exactly ``n_reps`` of them. ``n_reps`` is the task difficulty.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "swiss_roll_points",
    "s_curve_points",
    "segment_labels",
    "minmax_normalize",
    "gen_manifold",
    "split",
    "load_tabular",
    "save_dataset",
    "load_dataset",
]

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    n_classes: int
    splits: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        return self.points[idx], self.labels[idx]


def swiss_roll_points(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map unit-square samples onto the swiss roll. Returns (points, t)."""
    t = 1.5 * np.pi * (1 + 2 * u)
    pts = np.stack([t * np.cos(t), 21 * v, t * np.sin(t)], axis=1)
    return pts, t


def s_curve_points(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = 3 * np.pi * (u - 0.5)
    pts = np.stack([np.sin(t), 2 * v, np.sign(t) * (np.cos(t) - 1)], axis=1)
    return pts, t


_MANIFOLDS = {"swiss_roll": swiss_roll_points, "s_curve": s_curve_points}


def segment_labels(
    t: np.ndarray,
    n_classes: int,
    n_reps: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Class label per point from equal-count segments along ``t``.

    Segment ``i`` (ordered by ``t``) gets class ``i mod n_classes``. When
    ``rng`` is given the segment-to-class map is a random permutation of that
    round-robin map instead, which keeps ``n_reps`` segments per class.
    """
    n_seg = n_classes * n_reps
    m = len(t)
    pos = np.empty(m, dtype=np.int64)
    pos[np.argsort(t, kind="stable")] = np.arange(m)
    segment = pos * n_seg // m
    seg_class = np.arange(n_seg) % n_classes
    if rng is not None:
        seg_class = rng.permutation(seg_class)
    return seg_class[segment]


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Per-column min-max scaling to [0, 1]; zero-range columns map to 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def gen_manifold(
    kind: str,
    m: int,
    n_classes: int = 3,
    n_reps: int = 3,
    sigma: float = 0.0,
    seed: int | None = None,
    shuffle_classes: bool = False,
) -> Dataset:
    """Sample a labelled manifold dataset with ``m`` points.

    Labels are computed on the noiseless positions; Gaussian noise with
    standard deviation ``sigma`` is added afterwards, then every coordinate
    is min-max normalized over the whole dataset.
    """
    if kind not in _MANIFOLDS:
        raise ValueError(f"unknown manifold {kind!r}; expected one of {sorted(_MANIFOLDS)}")
    if m < 1 or n_classes < 1 or n_reps < 1:
        raise ValueError("m, n_classes and n_reps must be positive")
    if m < n_classes * n_reps:
        raise ValueError(f"m={m} is smaller than the segment count {n_classes * n_reps}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    u = rng.random(m)
    v = rng.random(m)
    pts, t = _MANIFOLDS[kind](u, v)
    # separate stream so labels and noise draws do not depend on each other
    label_rng = np.random.default_rng([seed if seed is not None else 0, 1]) if shuffle_classes else None
    labels = segment_labels(t, n_classes, n_reps, label_rng)
    noise_rng = np.random.default_rng([seed if seed is not None else 0, 2])
    if sigma > 0:
        pts = pts + noise_rng.normal(0.0, sigma, size=pts.shape)
    meta = {
        "manifold": kind,
        "n_classes": n_classes,
        "n_reps": n_reps,
        "sigma": sigma,
        "seed": seed,
        "m": m,
    }
    return Dataset(minmax_normalize(pts), labels, n_classes, meta=meta)


def split(ds: Dataset, sizes: tuple[int, int, int], seed: int | None = None) -> Dataset:
    """Random disjoint train/val/test index sets of the requested sizes."""
    if len(sizes) != 3 or min(sizes) < 0:
        raise ValueError("sizes must be three non-negative counts")
    if sum(sizes) > len(ds):
        raise ValueError(f"split sizes {sizes} exceed dataset size {len(ds)}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    a, b, c = sizes
    parts = {"train": perm[:a], "val": perm[a : a + b], "test": perm[a + b : a + b + c]}
    meta = dict(ds.meta, split_seed=seed, split_sizes=list(sizes))
    return replace(ds, splits=parts, meta=meta)


def load_tabular(path, label_column: str, normalize: bool = True) -> Dataset:
    """Read a CSV of numeric attributes plus one categorical label column.

    Labels are factorized to 0..C-1 in order of first appearance.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        if label_column not in reader.fieldnames:
            raise KeyError(f"{path}: no column named {label_column!r}")
        feats = [c for c in reader.fieldnames if c != label_column]
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    codes: dict[str, int] = {}
    labels = []
    points = np.empty((len(rows), len(feats)))
    for i, row in enumerate(rows):
        for j, c in enumerate(feats):
            try:
                points[i, j] = float(row[c])
            except (TypeError, ValueError):
                raise ValueError(f"{path}: row {i + 1} column {c!r} is not numeric: {row[c]!r}") from None
        labels.append(codes.setdefault(row[label_column], len(codes)))
    if normalize:
        points = minmax_normalize(points)
    meta = {"source": str(path), "label_column": label_column, "classes": list(codes), "features": feats}
    return Dataset(points, np.asarray(labels, dtype=np.int64), len(codes), meta=meta)


def save_dataset(ds: Dataset, path) -> None:
    """Write ``path`` (CSV: x0..x{d-1}, label, split) and ``path``.json metadata."""
    path = Path(path)
    where = np.full(len(ds), "", dtype=object)
    for name, idx in ds.splits.items():
        where[idx] = name
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.dim)] + ["label", "split"])
        for i in range(len(ds)):
            w.writerow([repr(float(x)) for x in ds.points[i]] + [int(ds.labels[i]), where[i]])
    meta = dict(ds.meta, n_classes=ds.n_classes)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = len(header) - 2
    points = np.array([[float(x) for x in r[:d]] for r in rows]).reshape(len(rows), d)
    labels = np.array([int(r[d]) for r in rows], dtype=np.int64)
    where = np.array([r[d + 1] for r in rows])
    splits = {s: np.flatnonzero(where == s) for s in SPLITS if np.any(where == s)}
    return Dataset(points, labels, int(meta["n_classes"]), splits, meta)
