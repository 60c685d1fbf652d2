"""RBF-kernel SVMs trained by sequential minimal optimization.

One generic SMO solver drives both the binary soft-margin machine (the
generation discriminator and the per-class open classifiers) and the
one-class variant used by the outlier-detection baselines. Decision
values map to (0,1) through a unit-scale logistic, and the soft-margin
cost is selected by stratified cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .dataset import Dataset
from .errors import DataError, DimensionError

DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 50
DEFAULT_COST_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)

_TAU = 1e-12  # curvature floor for degenerate pair updates


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel K(a, b) = exp(-gamma * ||a - b||^2)."""

    gamma: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise DataError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def for_dimension(cls, d: int) -> "KernelSpec":
        return cls(1.0 / d)


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise kernel values between the rows of A and of B."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    sq_a = np.einsum("ij,ij->i", A, A)
    sq_b = np.einsum("ij,ij->i", B, B)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


def rbf_vector(A: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel values between each row of A and a single vector x."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", A, A) + x @ x - 2.0 * (A @ x)
    return np.exp(-gamma * np.maximum(d2, 0.0))


def _logistic(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _smo_kernel(K, y, upper, alpha, E, tol, max_iter):  # pragma: no cover - compiled
    n = alpha.shape[0]
    it = 0
    converged = False
    while it < max_iter:
        # maximal violating pair: i from I_up, stop check against I_low
        m = -np.inf
        M = np.inf
        i = -1
        for t in range(n):
            e = -E[t]
            if y[t] > 0.0:
                if alpha[t] < upper[t] and e > m:
                    m = e
                    i = t
                if alpha[t] > 0.0 and e < M:
                    M = e
            else:
                if alpha[t] > 0.0 and e > m:
                    m = e
                    i = t
                if alpha[t] < upper[t] and e < M:
                    M = e
        if i < 0 or m - M <= tol:
            converged = True
            break

        # second-order choice of j among violating members of I_low
        Kii = K[i, i]
        best_gain = -np.inf
        j = -1
        for t in range(n):
            if y[t] > 0.0:
                in_low = alpha[t] > 0.0
            else:
                in_low = alpha[t] < upper[t]
            if not in_low:
                continue
            diff = m + E[t]
            if diff <= 0.0:
                continue
            eta = Kii + K[t, t] - 2.0 * K[i, t]
            if eta < _TAU:
                eta = _TAU
            gain = diff * diff / eta
            if gain > best_gain:
                best_gain = gain
                j = t
        if j < 0:
            converged = True
            break

        eta = Kii + K[j, j] - 2.0 * K[i, j]
        if eta < _TAU:
            eta = _TAU
        s = (E[j] - E[i]) / eta
        cap_i = (upper[i] - alpha[i]) if y[i] > 0.0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0.0 else (upper[j] - alpha[j])
        if cap_i < s:
            s = cap_i
        if cap_j < s:
            s = cap_j

        # bound states are assigned exactly so membership tests stay sharp
        if s >= cap_i:
            alpha[i] = upper[i] if y[i] > 0.0 else 0.0
        else:
            alpha[i] += s if y[i] > 0.0 else -s
        if s >= cap_j:
            alpha[j] = 0.0 if y[j] > 0.0 else upper[j]
        else:
            alpha[j] += -s if y[j] > 0.0 else s
        for t in range(n):
            E[t] += s * (K[i, t] - K[j, t])
        it += 1

    m = -np.inf
    M = np.inf
    for t in range(n):
        e = -E[t]
        if y[t] > 0.0:
            if alpha[t] < upper[t] and e > m:
                m = e
            if alpha[t] > 0.0 and e < M:
                M = e
        else:
            if alpha[t] > 0.0 and e > m:
                m = e
            if alpha[t] < upper[t] and e < M:
                M = e
    if m > -np.inf and M < np.inf:
        bias = 0.5 * (m + M)
    elif M < np.inf:
        bias = M
    elif m > -np.inf:
        bias = m
    else:
        bias = 0.0
    return bias, it, converged


def _smo(K: np.ndarray, y: np.ndarray, upper: np.ndarray, alpha: np.ndarray,
         E: np.ndarray, tol: float, max_iter: int) -> tuple[float, int, bool]:
    """Maximal-violating-pair SMO for the box-and-equality constrained dual

        min  1/2 a' (yy' * K) a + p' a    s.t.  y' a fixed,  0 <= a <= upper.

    K must be symmetric. ``alpha`` must be feasible on entry and ``E`` must
    equal K @ (alpha * y) + y * p for the caller's linear term p; both are
    updated in place, which is what makes warm-started retraining cheap.
    Returns (bias, iterations, converged) where the decision function is
    sum_i alpha_i y_i K(x_i, .) + bias.
    """
    bias, it, converged = _smo_kernel(K, y, upper, alpha, E, float(tol),
                                      int(max_iter))
    return float(bias), int(it), bool(converged)


@dataclass(frozen=True)
class BinarySvmModel:
    """Trained binary RBF SVM.

    ``alphas`` are the signed dual coefficients alpha_i * y_i of the
    support vectors; the decision function is
    f(x) = sum_i alphas[i] * K(sv_i, x) + bias.
    """

    support_vectors: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    cost: float
    converged: bool = True

    @property
    def d(self) -> int:
        return self.support_vectors.shape[1]


def fit_binary_arrays(X_pos: np.ndarray, X_neg: np.ndarray, kernel: KernelSpec,
                      cost: float, *, pos_cost: float | None = None,
                      tol: float = DEFAULT_TOL,
                      max_passes: int = DEFAULT_MAX_PASSES) -> BinarySvmModel:
    """Train on raw arrays of positive and negative feature vectors.

    ``pos_cost`` overrides the box bound on the positive side, which is how
    class-imbalanced training keeps the effective penalty balanced.
    """
    X_pos = np.atleast_2d(np.asarray(X_pos, dtype=np.float64))
    X_neg = np.atleast_2d(np.asarray(X_neg, dtype=np.float64))
    if len(X_pos) == 0 or len(X_neg) == 0:
        raise DataError("both classes must be non-empty")
    if X_pos.shape[1] != X_neg.shape[1]:
        raise DimensionError(
            f"dimension mismatch: {X_pos.shape[1]} vs {X_neg.shape[1]}"
        )
    if not cost > 0:
        raise DataError(f"cost must be positive, got {cost}")

    n_pos, n_neg = len(X_pos), len(X_neg)
    X = np.vstack([X_pos, X_neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    upper = np.concatenate([
        np.full(n_pos, pos_cost if pos_cost is not None else cost),
        np.full(n_neg, cost),
    ])
    K = rbf_matrix(X, X, kernel.gamma)
    alpha = np.zeros(len(X))
    E = -y.copy()  # K @ (alpha*y) + y*p with p = -1 and alpha = 0
    bias, _, conv = _smo(K, y, upper, alpha, E, tol, max_passes * len(X))

    sv = alpha > 0.0
    return BinarySvmModel(X[sv], (alpha * y)[sv], bias, kernel, cost, conv)


def train_binary_svm(pos: Dataset, neg: Dataset, kernel: KernelSpec | None = None,
                     cost: float = 1.0, tol: float = DEFAULT_TOL,
                     max_passes: int = DEFAULT_MAX_PASSES) -> BinarySvmModel:
    """Train a binary SVM with ``pos`` as the +1 class and ``neg`` as -1."""
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("both datasets must be non-empty")
    if pos.d != neg.d:
        raise DimensionError(f"dimension mismatch: {pos.d} vs {neg.d}")
    if kernel is None:
        kernel = KernelSpec.for_dimension(pos.d)
    return fit_binary_arrays(pos.X, neg.X, kernel, cost, tol=tol, max_passes=max_passes)


def decision_value(model: BinarySvmModel, x: np.ndarray) -> float:
    """f(x) = sum_i alphas[i] * K(sv_i, x) + bias."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise DimensionError(f"expected vector of length {model.d}, got {x.shape}")
    if len(model.support_vectors) == 0:
        return float(model.bias)
    k = rbf_vector(model.support_vectors, x, model.kernel.gamma)
    return float(model.alphas @ k + model.bias)


def decision_values(model: BinarySvmModel, X: np.ndarray) -> np.ndarray:
    """Vectorized decision function over the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.d:
        raise DimensionError(f"expected width {model.d}, got {X.shape[1]}")
    if len(model.support_vectors) == 0:
        return np.full(len(X), model.bias)
    K = rbf_matrix(X, model.support_vectors, model.kernel.gamma)
    return K @ model.alphas + model.bias


def predict_prob(model: BinarySvmModel, x: np.ndarray) -> float:
    """Probability of x being positive: logistic of the decision value."""
    return _logistic(decision_value(model, x))


@dataclass(frozen=True)
class OneClassSvmModel:
    """One-class SVM separating the data from the origin in feature space.

    ``alphas`` are nonnegative, sum to 1, and are bounded by 1/(nu*n);
    the decision function is f(x) = sum_i alphas[i] * K(sv_i, x) - rho.
    """

    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kernel: KernelSpec
    nu: float
    converged: bool = True

    @property
    def d(self) -> int:
        return self.support_vectors.shape[1]


def fit_one_class_arrays(X: np.ndarray, kernel: KernelSpec, nu: float,
                         tol: float = DEFAULT_TOL,
                         max_passes: int = DEFAULT_MAX_PASSES) -> OneClassSvmModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    if n == 0:
        raise DataError("training data must be non-empty")
    if not 0 < nu <= 1:
        raise DataError(f"nu must be in (0, 1], got {nu}")

    ub = 1.0 / (nu * n)
    alpha = np.zeros(n)
    full = int(nu * n)
    alpha[:full] = ub
    if full < n:
        alpha[full] = 1.0 - full * ub
    y = np.ones(n)
    upper = np.full(n, ub)
    K = rbf_matrix(X, X, kernel.gamma)
    E = K @ alpha  # p = 0, all labels +1
    bias, _, conv = _smo(K, y, upper, alpha, E, tol, max_passes * n)

    sv = alpha > 0.0
    return OneClassSvmModel(X[sv], alpha[sv], -bias, kernel, nu, conv)


def train_one_class_svm(data: Dataset, kernel: KernelSpec | None = None,
                        nu: float = 0.1, tol: float = DEFAULT_TOL,
                        max_passes: int = DEFAULT_MAX_PASSES) -> OneClassSvmModel:
    if len(data) == 0:
        raise DataError("training data must be non-empty")
    if kernel is None:
        kernel = KernelSpec.for_dimension(data.d)
    return fit_one_class_arrays(data.X, kernel, nu, tol=tol, max_passes=max_passes)


def one_class_decision_value(model: OneClassSvmModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise DimensionError(f"expected vector of length {model.d}, got {x.shape}")
    k = rbf_vector(model.support_vectors, x, model.kernel.gamma)
    return float(model.alphas @ k - model.rho)


def one_class_decision_values(model: OneClassSvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.d:
        raise DimensionError(f"expected width {model.d}, got {X.shape[1]}")
    K = rbf_matrix(X, model.support_vectors, model.kernel.gamma)
    return K @ model.alphas - model.rho


def _ovr_decision_matrix(models: list[BinarySvmModel], X: np.ndarray) -> np.ndarray:
    return np.column_stack([decision_values(m, X) for m in models])


def cross_validate_cost(data: Dataset, kernel: KernelSpec | None = None,
                        grid: tuple[float, ...] = DEFAULT_COST_GRID,
                        folds: int = 5, seed: int = 0) -> float:
    """Pick the cost maximizing closed-world one-vs-rest accuracy.

    Stratified folds; ties broken toward the smallest cost in the grid.
    """
    if folds < 2:
        raise DataError(f"folds must be >= 2, got {folds}")
    if not grid:
        raise DataError("cost grid must be non-empty")
    if data.K < 1:
        raise DataError("cross-validation needs at least one seen class")
    if kernel is None:
        kernel = KernelSpec.for_dimension(data.d)

    rng = np.random.default_rng(seed)
    fold_id = np.empty(len(data), dtype=np.int64)
    for k in range(1, data.K + 1):
        idx = np.flatnonzero(data.y == k)
        if len(idx) < folds:
            raise DataError(
                f"class {k} has {len(idx)} instances, fewer than {folds} folds"
            )
        perm = rng.permutation(idx)
        fold_id[perm] = np.arange(len(perm)) % folds

    grid = tuple(float(c) for c in grid)
    accs = np.zeros((len(grid), folds))
    for f in range(folds):
        tr = fold_id != f
        va = ~tr
        X_va, y_va = data.X[va], data.y[va]
        for gi, c in enumerate(grid):
            models = [
                fit_binary_arrays(data.X[tr & (data.y == k)],
                                  data.X[tr & (data.y != k)], kernel, c)
                for k in range(1, data.K + 1)
            ]
            pred = np.argmax(_ovr_decision_matrix(models, X_va), axis=1) + 1
            accs[gi, f] = float(np.mean(pred == y_va))

    means = accs.mean(axis=1)
    best = means.max()
    return min(c for c, m in zip(grid, means) if m == best)


def binary_svm_to_dict(model: BinarySvmModel) -> dict:
    return {
        "kind": "binary_svm",
        "support_vectors": model.support_vectors.tolist(),
        "alphas": model.alphas.tolist(),
        "bias": model.bias,
        "gamma": model.kernel.gamma,
        "cost": model.cost,
        "converged": model.converged,
    }


def binary_svm_from_dict(payload: dict) -> BinarySvmModel:
    return BinarySvmModel(
        np.asarray(payload["support_vectors"], dtype=np.float64),
        np.asarray(payload["alphas"], dtype=np.float64),
        float(payload["bias"]),
        KernelSpec(float(payload["gamma"])),
        float(payload["cost"]),
        bool(payload.get("converged", True)),
    )


def one_class_svm_to_dict(model: OneClassSvmModel) -> dict:
    return {
        "kind": "one_class_svm",
        "support_vectors": model.support_vectors.tolist(),
        "alphas": model.alphas.tolist(),
        "rho": model.rho,
        "gamma": model.kernel.gamma,
        "nu": model.nu,
        "converged": model.converged,
    }


def one_class_svm_from_dict(payload: dict) -> OneClassSvmModel:
    return OneClassSvmModel(
        np.asarray(payload["support_vectors"], dtype=np.float64),
        np.asarray(payload["alphas"], dtype=np.float64),
        float(payload["rho"]),
        KernelSpec(float(payload["gamma"])),
        float(payload["nu"]),
        bool(payload.get("converged", True)),
    )
