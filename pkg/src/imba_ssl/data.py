"""Synthetic imbalanced datasets, stratified splits, batch composition, and the
SMOTE + random-undersampling baseline."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .augment import PerturbSpec, perturb_vector
from .errors import ConfigError, ShapeError
from .losses import ClassFrequencyTable


@dataclass
class Dataset:
    """Feature matrix with optional integer labels (None for unlabeled pools)."""

    features: np.ndarray
    labels: np.ndarray | None
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be a 2-d matrix, got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features contain NaN/Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError("labels length must match feature rows")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
                raise ConfigError(f"labels out of range for {self.n_classes} classes")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class SplitDatasets:
    labeled: Dataset
    unlabeled: Dataset
    val: Dataset
    test: Dataset


def circle_means(n_classes: int, n_features: int, cov_scale: float) -> np.ndarray:
    """Class means on a circle in the first two feature dimensions, spaced so
    adjacent means sit 2*cov_scale apart (moderately overlapping classes)."""
    means = np.zeros((n_classes, n_features))
    if n_features == 1:
        means[:, 0] = 2.0 * cov_scale * np.arange(n_classes)
        return means
    radius = cov_scale / np.sin(np.pi / n_classes)
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


@dataclass
class GaussianMixtureSpec:
    """Isotropic Gaussian blobs with skewed class priors.

    cov_scale is the per-coordinate standard deviation. Default fractions are
    the seven-class skin-lesion distribution used throughout the experiments.
    """

    class_fractions: np.ndarray = field(
        default_factory=lambda: np.array([0.11, 0.67, 0.06, 0.03, 0.11, 0.01, 0.01]))
    means: np.ndarray | None = None
    cov_scale: float = 1.0
    n_labeled: int = 100
    n_unlabeled: int = 1000
    n_val: int = 200
    n_test: int = 400
    seed: int = 0
    n_features: int = 2

    def __post_init__(self):
        self.class_fractions = np.asarray(self.class_fractions, dtype=np.float64)
        if self.class_fractions.ndim != 1 or self.class_fractions.size < 2:
            raise ConfigError("class_fractions must be a vector of >= 2 classes")
        if np.any(self.class_fractions <= 0.0):
            raise ConfigError("every class fraction must be > 0 (all classes must be representable)")
        if abs(self.class_fractions.sum() - 1.0) > 1e-9:
            raise ConfigError("class_fractions must sum to 1")
        if self.cov_scale <= 0.0:
            raise ConfigError("cov_scale must be > 0")
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=np.float64)
            if self.means.shape != (self.n_classes, self.n_features):
                raise ConfigError(f"means must have shape ({self.n_classes}, {self.n_features})")
        for name in ("n_labeled", "n_unlabeled", "n_val", "n_test"):
            if getattr(self, name) < self.n_classes:
                raise ConfigError(f"{name} must be >= n_classes so every class can appear")

    @property
    def n_classes(self) -> int:
        return self.class_fractions.size


@dataclass
class Batch:
    labeled_x: np.ndarray      # (batch_labeled, D), already weakly perturbed
    labeled_y: np.ndarray      # (batch_labeled,)
    unlabeled_x: np.ndarray    # (batch_unlabeled, D) originals
    unlabeled_aug: np.ndarray  # (batch_unlabeled, D) perturbed copies


def _draw_class_counts(rng: np.random.Generator, n: int, fractions: np.ndarray,
                       guarantee_all: bool) -> np.ndarray:
    counts = rng.multinomial(n, fractions)
    if guarantee_all and n >= fractions.size:
        while np.any(counts == 0):
            counts[np.argmax(counts)] -= 1
            counts[np.argmin(counts)] += 1
    return counts


def _sample_split(rng: np.random.Generator, spec: GaussianMixtureSpec,
                  means: np.ndarray, n: int, labeled: bool,
                  guarantee_all: bool) -> Dataset:
    counts = _draw_class_counts(rng, n, spec.class_fractions, guarantee_all)
    features = []
    labels = []
    for c, count in enumerate(counts):
        features.append(rng.normal(0.0, spec.cov_scale, size=(count, spec.n_features)) + means[c])
        labels.append(np.full(count, c, dtype=np.int64))
    x = np.concatenate(features)
    y = np.concatenate(labels)
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm] if labeled else None, spec.n_classes)


def generate_gaussian_mixture(spec: GaussianMixtureSpec) -> SplitDatasets:
    """Draw the four pools; labeled/val/test are guaranteed to contain every class."""
    rng = np.random.default_rng(spec.seed)
    means = spec.means if spec.means is not None else circle_means(
        spec.n_classes, spec.n_features, spec.cov_scale)
    return SplitDatasets(
        labeled=_sample_split(rng, spec, means, spec.n_labeled, True, True),
        unlabeled=_sample_split(rng, spec, means, spec.n_unlabeled, False, False),
        val=_sample_split(rng, spec, means, spec.n_val, True, True),
        test=_sample_split(rng, spec, means, spec.n_test, True, True),
    )


def stratified_split(features, labels, ratios: Sequence[float] = (0.70, 0.20, 0.10),
                     seed: int = 0) -> tuple[Dataset, ...]:
    """Split per class with largest-remainder rounding, preserving class fractions."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    ratios = np.asarray(ratios, dtype=np.float64)
    if abs(ratios.sum() - 1.0) > 1e-9 or np.any(ratios < 0):
        raise ConfigError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    n_classes = int(labels.max()) + 1 if labels.size else 0
    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in ratios]
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size < len(ratios):
            warnings.warn(f"class {c} has only {idx.size} samples; best-effort allocation",
                          stacklevel=2)
        rng.shuffle(idx)
        quotas = ratios * idx.size
        alloc = np.floor(quotas).astype(np.int64)
        remainder = idx.size - alloc.sum()
        for j in np.argsort(-(quotas - alloc), kind="stable")[:remainder]:
            alloc[j] += 1
        start = 0
        for j, take in enumerate(alloc):
            buckets[j].append(idx[start:start + take])
            start += take
    out = []
    for parts in buckets:
        sel = np.sort(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)
        out.append(Dataset(features[sel], labels[sel], n_classes))
    return tuple(out)


def split_labeled_unlabeled(dataset: Dataset, labeled_fraction: float = 0.1,
                            seed: int = 0) -> tuple[Dataset, Dataset]:
    """Keep labels on a stratified fraction of the data; strip the rest."""
    if not 0.0 < labeled_fraction <= 1.0:
        raise ConfigError(f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    labeled, rest = stratified_split(dataset.features, dataset.labels,
                                     (labeled_fraction, 1.0 - labeled_fraction), seed)[:2]
    unlabeled = Dataset(rest.features, None, dataset.n_classes)
    return labeled, unlabeled


def class_frequencies(labels, n_classes: int) -> ClassFrequencyTable:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ConfigError("class_frequencies: empty label array")
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    return ClassFrequencyTable(counts / labels.size)


def batch_stream(labeled_pool: Dataset, unlabeled_pool: Dataset, spec: PerturbSpec,
                 rng: np.random.Generator, batch_labeled: int = 8,
                 batch_unlabeled: int = 22, augment_rng=None) -> Iterator[Batch]:
    """Endless batches: each pool is shuffled, consumed without replacement,
    and reshuffled when exhausted. Labeled features receive the same
    perturbation as the unlabeled copies."""
    if len(labeled_pool) == 0 or len(unlabeled_pool) == 0:
        raise ConfigError("batch_stream: pools must be non-empty")
    if augment_rng is None:
        augment_rng = rng

    def cycler(n: int) -> Iterator[int]:
        while True:
            for i in rng.permutation(n):
                yield int(i)

    labeled_iter = cycler(len(labeled_pool))
    unlabeled_iter = cycler(len(unlabeled_pool))
    while True:
        li = [next(labeled_iter) for _ in range(batch_labeled)]
        ui = [next(unlabeled_iter) for _ in range(batch_unlabeled)]
        lx = np.stack([perturb_vector(labeled_pool.features[i], spec, augment_rng) for i in li])
        originals = unlabeled_pool.features[ui]
        augmented = np.stack([perturb_vector(x, spec, augment_rng) for x in originals])
        yield Batch(
            labeled_x=lx,
            labeled_y=labeled_pool.labels[li],
            unlabeled_x=originals.copy(),
            unlabeled_aug=augmented,
        )


def compose_batch(labeled_pool: Dataset, unlabeled_pool: Dataset, spec: PerturbSpec,
                  rng: np.random.Generator, batch_labeled: int = 8,
                  batch_unlabeled: int = 22, augment_rng=None) -> Batch:
    """One batch: the first draw of a fresh epoch of batch_stream."""
    stream = batch_stream(labeled_pool, unlabeled_pool, spec, rng,
                          batch_labeled, batch_unlabeled, augment_rng)
    return next(stream)


def smote_oversample(dataset: Dataset, target_count_per_class, k_neighbors: int = 5,
                     rng: np.random.Generator | None = None) -> Dataset:
    """Grow each class to its target with synthetic points interpolated toward
    one of the k nearest same-class neighbors; originals are always kept."""
    if dataset.labels is None:
        raise ConfigError("smote_oversample requires labels")
    if k_neighbors < 1:
        raise ConfigError("k_neighbors must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    targets = _per_class_targets(dataset, target_count_per_class)
    new_x = [dataset.features]
    new_y = [dataset.labels]
    for c, target in enumerate(targets):
        idx = np.flatnonzero(dataset.labels == c)
        need = target - idx.size
        if need <= 0:
            continue
        points = dataset.features[idx]
        if idx.size == 1:
            warnings.warn(f"class {c} has a single sample; duplicating it", stacklevel=2)
            new_x.append(np.repeat(points, need, axis=0))
            new_y.append(np.full(need, c, dtype=np.int64))
            continue
        k = min(k_neighbors, idx.size - 1)
        dists = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
        np.fill_diagonal(dists, np.inf)
        neighbors = np.argsort(dists, axis=1, kind="stable")[:, :k]
        synth = np.empty((need, dataset.n_features))
        for j in range(need):
            i = int(rng.integers(0, idx.size))
            nn = int(neighbors[i, rng.integers(0, k)])
            lam = rng.uniform(0.0, 1.0)
            synth[j] = points[i] + lam * (points[nn] - points[i])
        new_x.append(synth)
        new_y.append(np.full(need, c, dtype=np.int64))
    return Dataset(np.concatenate(new_x), np.concatenate(new_y), dataset.n_classes)


def random_undersample(dataset: Dataset, target_count_per_class,
                       rng: np.random.Generator | None = None) -> Dataset:
    """Uniform subsampling without replacement down to the per-class targets."""
    if dataset.labels is None:
        raise ConfigError("random_undersample requires labels")
    rng = rng if rng is not None else np.random.default_rng(0)
    targets = _per_class_targets(dataset, target_count_per_class)
    keep = []
    for c, target in enumerate(targets):
        idx = np.flatnonzero(dataset.labels == c)
        if target > idx.size:
            raise ConfigError(f"class {c}: target {target} exceeds available {idx.size}")
        keep.append(rng.choice(idx, size=target, replace=False))
    sel = np.sort(np.concatenate(keep))
    return Dataset(dataset.features[sel], dataset.labels[sel], dataset.n_classes)


def _per_class_targets(dataset: Dataset, target_count_per_class) -> list[int]:
    if np.isscalar(target_count_per_class):
        return [int(target_count_per_class)] * dataset.n_classes
    targets = [int(t) for t in target_count_per_class]
    if len(targets) != dataset.n_classes:
        raise ConfigError(f"need {dataset.n_classes} per-class targets, got {len(targets)}")
    return targets


def apply_sampling_baseline(labeled: Dataset, k_neighbors: int = 5,
                            rng: np.random.Generator | None = None) -> Dataset:
    """SMOTE the below-median classes up to the median count and undersample
    the largest class down to it."""
    rng = rng if rng is not None else np.random.default_rng(0)
    counts = np.bincount(labeled.labels, minlength=labeled.n_classes)
    median = int(round(float(np.median(counts))))
    smote_targets = [max(int(c), median) if c < median else int(c) for c in counts]
    grown = smote_oversample(labeled, smote_targets, k_neighbors, rng)
    grown_counts = np.bincount(grown.labels, minlength=grown.n_classes)
    under_targets = list(grown_counts)
    under_targets[int(np.argmax(counts))] = min(median, int(grown_counts[int(np.argmax(counts))]))
    return random_undersample(grown, under_targets, rng)


# -- CSV interchange ----------------------------------------------------------


def save_csv(dataset: Dataset, path) -> None:
    """Rows of f0..fD-1,label; unlabeled rows carry label -1."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(dataset.n_features)] + ["label"])
        labels = dataset.labels if dataset.labels is not None else np.full(len(dataset), -1)
        for x, y in zip(dataset.features, labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path, n_classes: int | None = None) -> Dataset:
    """Read a dataset CSV; all-unlabeled files come back with labels None."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-1] != "label" or not header[0].startswith("f"):
            raise ConfigError(f"{path}: expected header f0,...,label")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    features = np.array([[float(v) for v in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows])
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 2
    if np.all(labels == -1):
        return Dataset(features, None, n_classes)
    if np.any(labels == -1):
        raise ConfigError(f"{path}: mixed labeled/unlabeled rows; split into separate files")
    return Dataset(features, labels, n_classes)


def default_noise_sigma(dataset: Dataset, factor: float = 0.3) -> float:
    """factor times the pooled within-class standard deviation."""
    if dataset.labels is None:
        raise ConfigError("default_noise_sigma requires a labeled dataset")
    variances = []
    for c in range(dataset.n_classes):
        rows = dataset.features[dataset.labels == c]
        if rows.shape[0] >= 2:
            variances.append(rows.var(axis=0, ddof=1).mean())
    if not variances:
        raise ConfigError("default_noise_sigma: no class has >= 2 samples")
    return factor * float(np.sqrt(np.mean(variances)))
