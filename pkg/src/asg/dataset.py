"""Datasets: CSV ingestion, standardization, class geometry, synthetic moons.

Labels are integers in 1..K for seen classes. The distinguished value
``NOVEL`` (0) marks instances whose class was never observed in training;
it appears in test data only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, InsufficientDataError, ParseError

NOVEL = 0
NOVEL_TOKEN = "novel"

# Floor applied to degenerate scales and ranges to avoid division by zero
# and zero-width boxes on constant feature columns.
DEGENERATE_FLOOR = 1e-12


@dataclass(frozen=True)
class LabeledInstance:
    """A single feature vector with its class label (NOVEL or 1..K)."""

    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """An immutable labeled instance matrix.

    X has shape (n, d), y has shape (n,) with values in {NOVEL} | 1..K.
    Arrays are copied and locked at construction, so datasets are safe to
    share across threads.
    """

    X: np.ndarray
    y: np.ndarray
    K: int

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or len(y) != len(X):
            raise DimensionError(
                f"labels must be a vector of length {len(X)}, got shape {y.shape}"
            )
        if self.K < 0:
            raise DataError(f"K must be nonnegative, got {self.K}")
        if len(y) and (y.min() < 0 or y.max() > self.K):
            bad = y[(y < 0) | (y > self.K)][0]
            raise DataError(f"label {bad} outside NOVEL..{self.K}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def instances(self) -> list[LabeledInstance]:
        return [LabeledInstance(x, int(lab)) for x, lab in zip(self.X, self.y)]


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned box [lower, upper] used as an optimization domain."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.array(self.lower, dtype=np.float64, copy=True)
        upper = np.array(self.upper, dtype=np.float64, copy=True)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionError("box bounds must be equal-length vectors")
        if np.any(lower > upper):
            raise DataError("box has lower[j] > upper[j]")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return len(self.lower)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature mean and scale fitted on training data."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64, copy=True)
        scale = np.array(self.scale, dtype=np.float64, copy=True)
        if np.any(scale <= 0):
            raise DataError("standardization scale must be positive")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, d: int) -> "StandardizationStats":
        return cls(np.zeros(d), np.ones(d))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.scale + self.mean


def _parse_label(token: str, row_number: int) -> int:
    token = token.strip()
    if token.lower() == NOVEL_TOKEN:
        return NOVEL
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"row {row_number}: label {token!r} is not an integer or 'novel'")
    if not value.is_integer() or value < 0:
        raise ParseError(f"row {row_number}: label {token!r} is not a nonnegative integer")
    return int(value)


def _looks_like_header(row: list[str]) -> bool:
    first = row[0].strip()
    if first.lower() == NOVEL_TOKEN:
        return False
    try:
        float(first)
        return False
    except ValueError:
        return True


def load_csv(path: str | Path, label_column: int) -> Dataset:
    """Load a labeled dataset from a comma-separated file.

    An optional single header row is detected by a non-numeric first cell
    and skipped. The label column holds nonnegative integers, with 0 or
    the token "novel" meaning NOVEL. K is the maximum seen label observed.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row]
    if not rows:
        raise DataError(f"empty input: {path}")
    if _looks_like_header(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"empty input (header only): {path}")

    width = len(rows[0][1])
    if not -width <= label_column < width:
        raise DataError(f"label column {label_column} out of range for width {width}")
    label_idx = label_column % width

    features: list[list[float]] = []
    labels: list[int] = []
    for row_number, row in rows:
        if len(row) != width:
            raise DimensionError(
                f"row {row_number}: expected {width} columns, got {len(row)}"
            )
        labels.append(_parse_label(row[label_idx], row_number))
        try:
            features.append(
                [float(cell) for j, cell in enumerate(row) if j != label_idx]
            )
        except ValueError:
            raise ParseError(f"row {row_number}: non-numeric feature value")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    K = int(y.max(initial=0))
    return Dataset(X, y, K)


def standardize(train: Dataset) -> tuple[Dataset, StandardizationStats]:
    """Center and scale each feature to zero mean, unit variance.

    Constant columns get their scale floored instead of raising, so they
    map to zero. The returned stats are meant to be reused on test data.
    """
    if len(train) == 0:
        raise InsufficientDataError("cannot standardize an empty dataset")
    mean = train.X.mean(axis=0)
    scale = np.maximum(train.X.std(axis=0), DEGENERATE_FLOOR)
    stats = StandardizationStats(mean, scale)
    return Dataset(stats.apply(train.X), train.y, train.K), stats


def class_subset(data: Dataset, k: int) -> Dataset:
    """All and only the instances labeled k, in their original order."""
    if not 1 <= k <= data.K:
        raise DataError(f"class {k} outside 1..{data.K}")
    mask = data.y == k
    return Dataset(data.X[mask], data.y[mask], data.K)


def min_pairwise_distance(data: Dataset) -> float:
    """Euclidean distance of the closest pair of distinct instances."""
    n = len(data)
    if n < 2:
        raise InsufficientDataError(
            f"min_pairwise_distance needs at least 2 instances, got {n}"
        )
    sq = np.einsum("ij,ij->i", data.X, data.X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (data.X @ data.X.T)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(max(d2.min(), 0.0)))


def bounding_box(data: Dataset, margin_fraction: float) -> SearchBox:
    """Axis-aligned bounding box expanded by a fraction of each range."""
    if len(data) == 0:
        raise InsufficientDataError("cannot bound an empty dataset")
    if margin_fraction < 0:
        raise DataError(f"margin_fraction must be nonnegative, got {margin_fraction}")
    lo = data.X.min(axis=0)
    hi = data.X.max(axis=0)
    rng = np.maximum(hi - lo, DEGENERATE_FLOOR)
    return SearchBox(lo - margin_fraction * rng, hi + margin_fraction * rng)


# Three half-circle arcs of radius 1 chained left to right. Centers and
# orientations chosen so the arcs interleave yet remain separable: the
# third (unseen) moon sits in the pocket formed by the first two.
_MOON_ARCS = ((0.0, 0.0, 1.0), (1.2, -0.35, -1.0), (2.4, -0.7, 1.0))


def _sample_arc(rng: np.random.Generator, arc: tuple[float, float, float],
                n: int, noise: float) -> np.ndarray:
    cx, cy, orient = arc
    t = rng.uniform(0.0, np.pi, n)
    pts = np.column_stack([cx + np.cos(t), cy + orient * np.sin(t)])
    if noise > 0:
        pts += rng.normal(0.0, noise, pts.shape)
    return pts


def make_three_moons(n_per_class: int, noise: float, seed: int) -> tuple[Dataset, Dataset]:
    """Synthesize the three interleaved moons in 2-D.

    Training data holds moons 1 and 2 only; test data holds fresh draws
    from all three, with the third labeled NOVEL. Deterministic per seed.
    """
    if n_per_class < 1:
        raise DataError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise < 0:
        raise DataError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    train_parts = [_sample_arc(rng, _MOON_ARCS[c], n_per_class, noise) for c in range(2)]
    test_parts = [_sample_arc(rng, _MOON_ARCS[c], n_per_class, noise) for c in range(3)]
    train_X = np.vstack(train_parts)
    train_y = np.repeat([1, 2], n_per_class)
    test_X = np.vstack(test_parts)
    test_y = np.repeat([1, 2, NOVEL], n_per_class)
    return Dataset(train_X, train_y, 2), Dataset(test_X, test_y, 2)
