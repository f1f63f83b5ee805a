"""Datasets, labeled/unlabeled splits, synthetic generators and data-stream bundles.

A stream is a pure function of (seeds, iteration): batch ``t`` can be rebuilt
at any time, which is what keeps the two streams of a bundle locked onto the
same unlabeled rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ParseError, ShapeError

UNLABELED = -1


@dataclass
class Dataset:
    """Feature matrix with per-row labels (``UNLABELED`` = -1 where unknown)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_range: tuple = (0.0, 1.0)
    # true labels of unlabeled rows; only evaluation code may read these
    shadow_labels: np.ndarray | None = None
    source_index: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (len(self.features),):
            raise ShapeError(f"{len(self.labels)} labels for {len(self.features)} rows")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.num_classes))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ConfigError(
                f"label {self.labels[row]} at row {row} outside [0, {self.num_classes})"
            )
        self.feature_range = (float(self.feature_range[0]), float(self.feature_range[1]))

    def __len__(self):
        return len(self.features)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def fully_labeled(self):
        return bool(np.all(self.labels >= 0))

    def eval_labels(self):
        """Labels usable for scoring: real labels, else the shadow store."""
        if self.fully_labeled:
            return self.labels
        if self.shadow_labels is not None:
            return self.shadow_labels
        raise ConfigError("dataset has no labels to evaluate against")

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.features[rows],
            self.labels[rows],
            self.num_classes,
            self.feature_range,
            None if self.shadow_labels is None else self.shadow_labels[rows],
            None if self.source_index is None else self.source_index[rows],
        )


@dataclass(frozen=True)
class SplitSpec:
    n_labeled: int
    seed: int = 0


def split(dataset, spec):
    """Stratified labeled/unlabeled split; U's labels move to its shadow store.

    Labeled slots are shared as evenly as possible between classes (extra slots
    go to the lowest class indices), capped by each class's size.
    """
    if not dataset.fully_labeled:
        raise ConfigError("split needs a fully labeled dataset")
    n, c = len(dataset), dataset.num_classes
    if spec.n_labeled < c:
        raise ConfigError(
            f"n_labeled={spec.n_labeled} < num_classes={c}: stratification impossible",
            field="n_labeled",
        )
    if spec.n_labeled > n:
        raise ConfigError(f"n_labeled={spec.n_labeled} exceeds dataset size {n}", field="n_labeled")

    rng = np.random.default_rng(spec.seed)
    by_class = [np.flatnonzero(dataset.labels == k) for k in range(c)]
    if any(len(rows) == 0 for rows in by_class):
        raise ConfigError("every class needs at least one row for a stratified split")
    quota = [0] * c
    remaining = spec.n_labeled
    # water-filling: round-robin over classes that still have rows
    while remaining:
        for k in range(c):
            if remaining and quota[k] < len(by_class[k]):
                quota[k] += 1
                remaining -= 1

    chosen = []
    for rows, q in zip(by_class, quota):
        chosen.append(rng.permutation(rows)[:q])
    s_idx = np.sort(np.concatenate(chosen))
    mask = np.ones(n, dtype=bool)
    mask[s_idx] = False
    u_idx = np.flatnonzero(mask)

    base = dataset.source_index if dataset.source_index is not None else np.arange(n)
    s = Dataset(
        dataset.features[s_idx],
        dataset.labels[s_idx],
        c,
        dataset.feature_range,
        source_index=base[s_idx],
    )
    u = Dataset(
        dataset.features[u_idx],
        np.full(len(u_idx), UNLABELED),
        c,
        dataset.feature_range,
        shadow_labels=dataset.labels[u_idx],
        source_index=base[u_idx],
    )
    return s, u


def _minmax(x):
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((x - lo) / span, 0.0, 1.0)


def two_moons(n, noise_sd=0.1, seed=0):
    """Two interleaving half circles, min-max scaled to [0, 1] per feature.

    Class 0 lies on the upper arc (cos t, sin t), class 1 on the lower arc
    (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi]. Gaussian jitter
    with sd ``noise_sd`` is added before scaling.
    """
    if n < 2:
        raise ConfigError(f"n must be >= 2, got {n}", field="n")
    if noise_sd < 0:
        raise ConfigError(f"noise must be >= 0, got {noise_sd}", field="noise_sd")
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    x = np.vstack(
        [
            np.column_stack([np.cos(t_out), np.sin(t_out)]),
            np.column_stack([1 - np.cos(t_in), 1 - np.sin(t_in) - 0.5]),
        ]
    )
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    if noise_sd > 0:
        x = x + rng.normal(scale=noise_sd, size=x.shape)
    order = rng.permutation(n)
    return Dataset(_minmax(x[order]), y[order], 2, (0.0, 1.0))


def gaussian_blobs(n, num_classes=3, separation=3.0, seed=0, dim=2):
    """``num_classes`` unit-variance Gaussian clusters, scaled to [0, 1].

    Centres sit on a circle of radius ``separation`` in the first two
    coordinates (on the first axis when ``dim`` is 1).
    """
    if n < 2:
        raise ConfigError(f"n must be >= 2, got {n}", field="n")
    if num_classes < 1:
        raise ConfigError("num_classes must be >= 1", field="num_classes")
    if separation < 0:
        raise ConfigError("separation must be >= 0", field="separation")
    if dim < 1:
        raise ConfigError("dim must be >= 1", field="dim")
    rng = np.random.default_rng(seed)
    counts = [n // num_classes + (1 if k < n % num_classes else 0) for k in range(num_classes)]
    centres = np.zeros((num_classes, dim))
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    centres[:, 0] = separation * np.cos(angles)
    if dim > 1:
        centres[:, 1] = separation * np.sin(angles)
    x = np.vstack([rng.normal(size=(m, dim)) + centres[k] for k, m in enumerate(counts)])
    y = np.concatenate([np.full(m, k, dtype=np.int64) for k, m in enumerate(counts)])
    order = rng.permutation(n)
    return Dataset(_minmax(x[order]), y[order], num_classes, (0.0, 1.0))


GENERATORS = {
    "two-moons": two_moons,
    "gaussian-blobs": gaussian_blobs,
}


# ---------------------------------------------------------------------------
# streams


@dataclass
class Batch:
    x_s: np.ndarray
    y_s: np.ndarray
    x_u: np.ndarray

    def __len__(self):
        return len(self.x_s) + len(self.x_u)


@lru_cache(maxsize=256)
def _epoch_perm(seed, epoch, size):
    perm = np.random.default_rng([seed, epoch]).permutation(size)
    perm.flags.writeable = False
    return perm


def pool_positions(seed, size, start, count):
    """Pool indices at draw positions [start, start+count) of an endless reshuffled cycle."""
    if count == 0 or size == 0:
        return np.zeros(0, dtype=np.int64)
    pos = np.arange(start, start + count)
    epochs = pos // size
    out = np.empty(count, dtype=np.int64)
    for e in np.unique(epochs):
        sel = epochs == e
        out[sel] = _epoch_perm(seed, int(e), size)[pos[sel] % size]
    return out


class DataStream:
    """Endless sequence of [supervised, unsupervised] batches.

    Batch ``t`` takes ``floor((t+1)*B*|S|/|D|) - floor(t*B*|S|/|D|)`` supervised
    rows, so any two batches differ by at most one supervised row and both
    pools are consumed evenly. Each pool is walked in a fresh permutation per
    pass.
    """

    def __init__(self, sup, unl, batch_size, sup_seed, unl_seed):
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1", field="batch_size")
        if len(sup) == 0 and len(unl) == 0:
            raise ConfigError("stream needs a non-empty pool")
        self.sup = sup
        self.unl = unl
        self.batch_size = batch_size
        self.sup_seed = sup_seed
        self.unl_seed = unl_seed
        self.t = 0

    @property
    def n_total(self):
        return len(self.sup) + len(self.unl)

    def _sup_before(self, t):
        return (t * self.batch_size * len(self.sup)) // self.n_total

    def sup_count(self, t):
        return self._sup_before(t + 1) - self._sup_before(t)

    def indices_at(self, t):
        """(supervised indices, unsupervised indices) for batch ``t``."""
        s0 = self._sup_before(t)
        ns = self._sup_before(t + 1) - s0
        u0 = t * self.batch_size - s0
        nu = self.batch_size - ns
        return (
            pool_positions(self.sup_seed, len(self.sup), s0, ns),
            pool_positions(self.unl_seed, len(self.unl), u0, nu),
        )

    def batch_at(self, t):
        si, ui = self.indices_at(t)
        return Batch(self.sup.features[si], self.sup.labels[si], self.unl.features[ui])

    def next_batch(self):
        batch = self.batch_at(self.t)
        self.t += 1
        return batch


def next_batch(stream):
    return stream.next_batch()


@dataclass
class StreamBundle:
    """Two streams sharing every unlabeled batch but ordering S differently."""

    s: DataStream
    s_bar: DataStream

    @property
    def streams(self):
        return (self.s, self.s_bar)

    def next(self):
        return self.s.next_batch(), self.s_bar.next_batch()


def make_bundles(sup, unl, n_views, batch_size, seed):
    """``n_views // 2`` bundles with independent seeds for every pool order."""
    if n_views < 2 or n_views % 2:
        raise ConfigError(f"must be an even number >= 2, got {n_views}", field="n_views")
    n_bundles = n_views // 2
    children = np.random.SeedSequence(seed).generate_state(3 * n_bundles, dtype=np.uint64)
    bundles = []
    for i in range(n_bundles):
        sa, sb, su = (int(v) for v in children[3 * i : 3 * i + 3])
        bundles.append(
            StreamBundle(
                DataStream(sup, unl, batch_size, sa, su),
                DataStream(sup, unl, batch_size, sb, su),
            )
        )
    return bundles


def iterations_per_epoch(n_total, n_views, batch_size):
    return math.ceil(n_total / (n_views // 2 * batch_size))


# ---------------------------------------------------------------------------
# CSV


def save_csv(dataset, path):
    d = dataset.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(d)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            w.writerow([format(v, ".17g") for v in row] + ["" if label < 0 else int(label)])


def load_csv(path, num_classes=None, feature_range=None):
    """Read a dataset CSV with header ``f0,...,f{d-1},label``.

    ``num_classes`` defaults to max label + 1. ``feature_range`` defaults to
    [0, 1] widened to cover the data.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected a header", line=1, path=path) from None
        d = len(header) - 1
        expected = [f"f{j}" for j in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise ParseError(
                f"bad header {','.join(header)!r}, expected f0,...,f{{d-1}},label",
                line=1,
                path=path,
            )
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} columns, got {len(row)}", line=lineno, path=path)
            try:
                feats.append([float(v) for v in row[:d]])
                labels.append(int(row[d]) if row[d].strip() != "" else UNLABELED)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if labels[-1] < UNLABELED or (labels[-1] == UNLABELED and row[d].strip() != ""):
                raise ConfigError(f"{path}:{lineno}: negative label {labels[-1]}")
    if not feats:
        raise ParseError("no data rows", path=path)
    x = np.array(feats, dtype=np.float64)
    y = np.array(labels, dtype=np.int64)
    if not np.all(np.isfinite(x)):
        raise ParseError("non-finite feature value", path=path)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if (y >= 0).any() else 1
    if feature_range is None:
        feature_range = (min(0.0, float(x.min())), max(1.0, float(x.max())))
    return Dataset(x, y, num_classes, feature_range)
