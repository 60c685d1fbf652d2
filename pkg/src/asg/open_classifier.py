"""The three-step open-category pipeline and its prediction rule.

Training tunes the SVM cost on the seen data, generates per-class pools,
and fits one seen-vs-generated classifier per class. At prediction time
an instance is NOVEL when every per-class classifier scores it negative,
otherwise it takes the class with the highest decision value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import (NOVEL, Dataset, StandardizationStats, class_subset,
                      standardize)
from .dfo import minimize_racos
from .errors import DataError, DimensionError
from .generation import (DiscriminatorTrainer, GeneratedPool, GenerationConfig,
                         Minimizer, generate_pool)
from .svm import (DEFAULT_COST_GRID, BinarySvmModel, KernelSpec,
                  cross_validate_cost, decision_values, fit_binary_arrays)


@dataclass(frozen=True)
class OpenCategoryModel:
    """K per-class classifiers plus the stats needed to score raw inputs."""

    per_class: dict[int, BinarySvmModel]
    standardization: StandardizationStats
    K: int

    def __post_init__(self) -> None:
        if set(self.per_class) != set(range(1, self.K + 1)):
            raise DataError(f"need exactly classifiers 1..{self.K}")


@dataclass(frozen=True)
class Prediction:
    """Predicted label (NOVEL or 1..K) and the K per-class decision values."""

    label: int
    confidences: np.ndarray


def train_asg(train: Dataset, cfg: GenerationConfig, use_positives: bool = True,
              *, kernel: KernelSpec | None = None, cost: float | None = None,
              cost_grid: tuple[float, ...] = DEFAULT_COST_GRID, folds: int = 5,
              optimizer: Minimizer = minimize_racos
              ) -> tuple[OpenCategoryModel, GeneratedPool]:
    """Tune, generate, and train the per-class open classifiers.

    ``cost`` skips the cross-validation step when the caller has already
    tuned it. The positive side of each final classifier is cost-weighted
    by the class-size ratio so the generated negatives cannot swamp it.
    """
    if train.K < 1:
        raise DataError("training data has no seen classes")
    std_train, stats = standardize(train)
    if kernel is None:
        kernel = KernelSpec.for_dimension(train.d)
    if cost is None:
        cost = cross_validate_cost(std_train, kernel, cost_grid, folds,
                                   seed=cfg.seed)
    trainer = DiscriminatorTrainer(kernel, cost)
    pool = generate_pool(std_train, cfg, trainer, optimizer,
                         use_positives=use_positives)

    per_class: dict[int, BinarySvmModel] = {}
    for k in range(1, train.K + 1):
        class_X = class_subset(std_train, k).X
        pos_parts = [class_X]
        if use_positives and k in pool.positives and len(pool.positives[k]):
            pos_parts.append(pool.positives[k])
        pos_X = np.vstack(pos_parts)
        neg_X = pool.negatives[k]
        # same learning algorithm as the discriminator, including its
        # calibrated capacity: the class must be separable from negatives
        # generated right at its boundary
        class_cost = pool.discriminator_costs.get(k, cost)
        pos_cost = class_cost * (len(neg_X) / len(pos_X))
        per_class[k] = fit_binary_arrays(pos_X, neg_X, kernel, class_cost,
                                         pos_cost=pos_cost)
    return OpenCategoryModel(per_class, stats, train.K), pool


def decision_matrix(model: OpenCategoryModel, X: np.ndarray) -> np.ndarray:
    """Per-class decision values for raw (unstandardized) rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xs = model.standardization.apply(X)
    return np.column_stack([
        decision_values(model.per_class[k], Xs) for k in range(1, model.K + 1)
    ])


def predict(model: OpenCategoryModel, x: np.ndarray) -> Prediction:
    """NOVEL when all decision values are negative, else the argmax class."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(model.standardization.mean),):
        raise DimensionError(
            f"expected vector of length {len(model.standardization.mean)}, "
            f"got shape {x.shape}"
        )
    conf = decision_matrix(model, x[None, :])[0]
    if np.all(conf < 0):
        return Prediction(NOVEL, conf)
    return Prediction(int(np.argmax(conf)) + 1, conf)


def predict_labels(model: OpenCategoryModel, X: np.ndarray) -> np.ndarray:
    """Vectorized prediction over the rows of X."""
    conf = decision_matrix(model, X)
    labels = np.argmax(conf, axis=1) + 1
    labels[np.all(conf < 0, axis=1)] = NOVEL
    return labels


def err(y_true: int, y_pred: int) -> int:
    """0-1 loss with NOVEL treated as its own target label."""
    if y_true == NOVEL:
        return int(y_pred != NOVEL)
    return int(y_pred != y_true)


def empirical_risk(model: OpenCategoryModel, test: Dataset) -> float:
    """Mean 0-1 loss of the model over a labeled test set."""
    if len(test) == 0:
        raise DataError("test data must be non-empty")
    preds = predict_labels(model, test.X)
    return float(np.mean([err(int(t), int(p)) for t, p in zip(test.y, preds)]))
