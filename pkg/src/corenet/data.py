"""Labeled vector datasets: CSV I/O and seeded synthetic generators.

CSV layout: header row, first column an integer class label, remaining
columns features. Splits are index sets tagged train/validation/test.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise FormatError("features must be (n, d) with n labels")
        if not np.all(np.isfinite(self.features)):
            raise FormatError("dataset contains non-finite features")
        if self.labels.size and self.labels.min() < 0:
            raise FormatError("labels must be non-negative class indices")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def subset(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        if split not in self.splits:
            raise KeyError(f"no split named {split!r}")
        idx = self.splits[split]
        return self.features[idx], self.labels[idx]

    def split_randomly(self, seed: int, fractions=(0.6, 0.2, 0.2)) -> "Dataset":
        """Assign train/validation/test tags by a seeded shuffle."""
        if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must be three values summing to 1")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        order = rng.permutation(self.n_samples)
        n_train = int(round(fractions[0] * self.n_samples))
        n_val = int(round(fractions[1] * self.n_samples))
        splits = {
            "train": np.sort(order[:n_train]),
            "validation": np.sort(order[n_train:n_train + n_val]),
            "test": np.sort(order[n_train + n_val:]),
        }
        return Dataset(self.features, self.labels, splits)


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty CSV file") from None
        if len(header) < 2:
            raise FormatError("CSV needs a label column and at least one feature")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                label = int(row[0])
            except ValueError:
                raise FormatError(f"line {lineno}: label {row[0]!r} is not an integer") from None
            try:
                feats = [float(x) for x in row[1:]]
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric feature") from None
            labels.append(label)
            rows.append(feats)
    if not rows:
        raise FormatError("CSV has no data rows")
    return Dataset(np.array(rows), np.array(labels))


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(dataset.n_features)])
        for y, x in zip(dataset.labels, dataset.features):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])


def make_blobs(n_samples: int, n_features: int, n_classes: int, seed: int,
               spread: float = 5.0, noise: float = 1.0) -> Dataset:
    """Gaussian blobs with seeded class centers, split 60/20/20."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    centers = rng.normal(scale=spread, size=(n_classes, n_features))
    labels = rng.integers(0, n_classes, size=n_samples)
    features = centers[labels] + rng.normal(scale=noise, size=(n_samples, n_features))
    return Dataset(features, labels).split_randomly(seed=seed + 1)


def make_digits(n_samples: int, seed: int, noise: float = 0.25) -> Dataset:
    """8x8 digit-like patterns: one seeded stroke template per class plus
    pixel noise, clipped to non-negative intensities. Split 60/20/20."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_classes, d = 10, 64
    templates = (rng.random((n_classes, d)) > 0.55).astype(float)
    labels = rng.integers(0, n_classes, size=n_samples)
    features = templates[labels] + rng.normal(scale=noise, size=(n_samples, d))
    features = np.clip(features, 0.0, None)
    return Dataset(features, labels).split_randomly(seed=seed + 1)
