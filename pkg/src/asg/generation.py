"""Boundary-sample generation against a retrained SVM discriminator.

For each seen class, candidate points are scored by how confidently a
discriminator trained on the class data versus the generated pool plus
the candidate itself calls the candidate positive, plus distance
penalties that keep negatives near the class and spread the pool out.
A derivative-free optimizer minimizes that score once per generated
sample; accepted samples join the pool and the next search begins.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import (Dataset, SearchBox, bounding_box, class_subset,
                      min_pairwise_distance)
from .dfo import OptBudget, OptResult, minimize_racos
from .errors import DataError, InsufficientDataError
from .svm import (DEFAULT_MAX_PASSES, DEFAULT_TOL, BinarySvmModel, KernelSpec,
                  _logistic, _smo, fit_binary_arrays, predict_prob)

Minimizer = Callable[[Callable[[np.ndarray], float], SearchBox, OptBudget], OptResult]


@dataclass(frozen=True)
class GenerationConfig:
    """All generation hyper-parameters.

    Radii left as None resolve per class to the minimum pairwise distance
    within that class's training data. ``calibrate_capacity`` escalates
    the discriminator cost per class until candidates at the class's own
    point-spacing scale can be told apart from the class; without enough
    capacity the boundary cannot be captured and generated samples drift
    to the search-box edge.
    """

    t: int = 200
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    lambda1: float = 0.1
    lambda2: float = 0.1
    eta: float = 0.3
    opt_budget: int = 1000
    margin_fraction: float = 0.25
    seed: int = 0
    positives_as_positive_side: bool = False
    calibrate_capacity: bool = True

    def __post_init__(self) -> None:
        if self.t < 1:
            raise DataError(f"t must be >= 1, got {self.t}")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.eta < 0:
            raise DataError("penalty weights must be nonnegative")
        for name in ("c1", "c2", "c3"):
            radius = getattr(self, name)
            if radius is not None and not radius > 0:
                raise DataError(f"{name} must be positive, got {radius}")
        if self.opt_budget < 1:
            raise DataError(f"opt_budget must be >= 1, got {self.opt_budget}")
        if self.margin_fraction < 0:
            raise DataError("margin_fraction must be nonnegative")


@dataclass
class GeneratedPool:
    """Per-class generated vectors plus per-sample diagnostics.

    Diagnostic rows are (objective value, discriminator probability) at
    the moment each sample was accepted. ``discriminator_costs`` records
    the per-class cost the generation discriminator actually used.
    """

    negatives: dict[int, np.ndarray] = field(default_factory=dict)
    positives: dict[int, np.ndarray] = field(default_factory=dict)
    negative_diagnostics: dict[int, np.ndarray] = field(default_factory=dict)
    positive_diagnostics: dict[int, np.ndarray] = field(default_factory=dict)
    discriminator_costs: dict[int, float] = field(default_factory=dict)


class _WarmDiscriminator:
    """Retrains the discriminator incrementally as the pool grows.

    Layout: a fixed block of training points, a block of accepted pool
    points (grown one at a time), and one candidate slot at the end.
    Between candidate evaluations only the candidate's kernel column
    changes, so the error cache is patched in O(n) and the SMO solve is
    warm-started from the previous alphas.
    """

    def __init__(self, X0: np.ndarray, y0: np.ndarray, grow_label: float,
                 capacity: int, kernel: KernelSpec, cost: float,
                 tol: float, max_passes: int):
        n0 = len(X0)
        cap = n0 + capacity + 1
        d = X0.shape[1]
        self._gamma = kernel.gamma
        self._cost = cost
        self._tol = tol
        self._max_passes = max_passes
        self._n0 = n0
        self._n = n0  # fixed points so far (training block + accepted pool)
        self._X = np.empty((cap, d))
        self._X[:n0] = X0
        self._sq = np.empty(cap)
        self._sq[:n0] = np.einsum("ij,ij->i", X0, X0)
        self._K = np.empty((cap, cap))
        self._K[:n0, :n0] = np.exp(
            -self._gamma
            * np.maximum(self._sq[:n0, None] + self._sq[None, :n0]
                         - 2.0 * (X0 @ X0.T), 0.0)
        )
        self._y = np.empty(cap)
        self._y[:n0] = y0
        self._y[n0:] = grow_label
        self._upper = np.full(cap, cost)
        self._alpha = np.zeros(cap)
        self._E = np.empty(cap)
        self._E[:n0] = -y0  # K @ (alpha*y) + y*p with alpha = 0, p = -1
        self._k_prev: np.ndarray | None = None
        self.last_prob = math.nan

    @property
    def pool_size(self) -> int:
        return self._n - self._n0

    def min_dist_to_block(self, x: np.ndarray, start: int, stop: int) -> float:
        if stop <= start:
            return np.inf
        d2 = self._sq[start:stop] + x @ x - 2.0 * (self._X[start:stop] @ x)
        return float(np.sqrt(max(d2.min(), 0.0)))

    def min_dist_to_base(self, x: np.ndarray) -> float:
        return self.min_dist_to_block(x, 0, self._n0)

    def min_dist_to_pool(self, x: np.ndarray) -> float:
        return self.min_dist_to_block(x, self._n0, self._n)

    def prob_with_candidate(self, x: np.ndarray) -> float:
        """Train with the candidate included; return its positive probability."""
        n = self._n
        c = n
        k_new = np.exp(
            -self._gamma
            * np.maximum(self._sq[:n] + x @ x - 2.0 * (self._X[:n] @ x), 0.0)
        )
        self._X[c] = x
        self._sq[c] = x @ x
        self._K[c, :n] = k_new
        self._K[:n, c] = k_new
        self._K[c, c] = 1.0

        w = self._alpha[:n] * self._y[:n]
        if self._k_prev is not None:
            # candidate column swap: patch the error cache in O(n)
            self._E[:n] += (self._alpha[c] * self._y[c]) * (k_new - self._k_prev)
        else:
            self._alpha[c] = 0.0
        self._E[c] = k_new @ w + self._alpha[c] * self._y[c] - self._y[c]

        active = slice(0, n + 1)
        bias, _, _ = _smo(self._K[active, active], self._y[active],
                          self._upper[active], self._alpha[active],
                          self._E[active], self._tol,
                          self._max_passes * (n + 1))
        self._k_prev = k_new.copy()
        u_c = self._E[c] + self._y[c]
        self.last_prob = _logistic(u_c + bias)
        return self.last_prob

    def accept_candidate(self) -> None:
        """Make the current candidate a permanent pool member."""
        if self._k_prev is None:
            raise RuntimeError("no candidate has been evaluated")
        self._n += 1
        self._alpha[self._n] = 0.0
        self._k_prev = None


@dataclass(frozen=True)
class DiscriminatorTrainer:
    """Trains the generation discriminator; the probability side of the
    objective is the logistic of the trained model's decision value."""

    kernel: KernelSpec
    cost: float
    tol: float = DEFAULT_TOL
    max_passes: int = DEFAULT_MAX_PASSES

    def train(self, pos_X: np.ndarray, neg_X: np.ndarray) -> BinarySvmModel:
        return fit_binary_arrays(pos_X, neg_X, self.kernel, self.cost,
                                 tol=self.tol, max_passes=self.max_passes)

    def prob_positive(self, pos_X: np.ndarray, neg_X: np.ndarray,
                      x: np.ndarray) -> float:
        return predict_prob(self.train(pos_X, neg_X), x)

    def incremental(self, X0: np.ndarray, y0: np.ndarray, grow_label: float,
                    capacity: int) -> _WarmDiscriminator:
        return _WarmDiscriminator(X0, y0, grow_label, capacity, self.kernel,
                                  self.cost, self.tol, self.max_passes)


def _min_dist(x: np.ndarray, points: np.ndarray) -> float:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", points, points) + x @ x - 2.0 * (points @ x)
    return float(np.sqrt(max(d2.min(), 0.0)))


def penalty_p1(x: np.ndarray, class_data: Dataset, c1: float) -> float:
    """Linear penalty for straying more than c1 from the class data."""
    if not c1 > 0:
        raise DataError(f"c1 must be positive, got {c1}")
    if len(class_data) == 0:
        raise DataError("class data must be non-empty")
    return max(0.0, _min_dist(x, class_data.X) - c1)


def penalty_p2(x: np.ndarray, generated: np.ndarray, c2: float) -> float:
    """Linear penalty for landing within c2 of an already generated sample."""
    if not c2 > 0:
        raise DataError(f"c2 must be positive, got {c2}")
    if generated is None or len(generated) == 0:
        return 0.0
    return max(0.0, c2 - _min_dist(x, generated))


def penalty_p3(x: np.ndarray, generated_pos: np.ndarray, c3: float) -> float:
    """Scattering penalty for generated positives; same form as penalty_p2."""
    if not c3 > 0:
        raise DataError(f"c3 must be positive, got {c3}")
    if generated_pos is None or len(generated_pos) == 0:
        return 0.0
    return max(0.0, c3 - _min_dist(x, generated_pos))


def _resolve_radius(given: float | None, class_data: Dataset, name: str) -> float:
    if given is not None:
        return given
    if len(class_data) < 2:
        raise InsufficientDataError(
            f"{name} auto-resolution needs >= 2 class instances"
        )
    radius = min_pairwise_distance(class_data)
    if radius <= 0:
        raise DataError(f"{name} resolved to {radius}; class data has duplicates")
    return radius


def negative_objective(x: np.ndarray, class_data: Dataset,
                       negatives_so_far: np.ndarray, cfg: GenerationConfig,
                       trainer: DiscriminatorTrainer) -> float:
    """Discriminator probability plus the proximity and scatter penalties."""
    x = np.asarray(x, dtype=np.float64)
    c1 = _resolve_radius(cfg.c1, class_data, "c1")
    c2 = _resolve_radius(cfg.c2, class_data, "c2")
    negs = np.atleast_2d(np.asarray(negatives_so_far, dtype=np.float64)) \
        if negatives_so_far is not None and len(negatives_so_far) else \
        np.empty((0, class_data.d))
    neg_with_x = np.vstack([negs, x[None, :]])
    p = trainer.prob_positive(class_data.X, neg_with_x, x)
    return (p + cfg.lambda1 * penalty_p1(x, class_data, c1)
            + cfg.lambda2 * penalty_p2(x, negs, c2))


def positive_objective(x: np.ndarray, class_data: Dataset,
                       positives_so_far: np.ndarray, cfg: GenerationConfig,
                       trainer: DiscriminatorTrainer) -> float:
    """Negated discriminator probability plus the scatter penalty.

    Following the generation formula literally, the discriminator is
    trained with the generated positives (and the candidate) on its
    negative side.
    """
    x = np.asarray(x, dtype=np.float64)
    c3 = _resolve_radius(cfg.c3, class_data, "c3")
    pool = np.atleast_2d(np.asarray(positives_so_far, dtype=np.float64)) \
        if positives_so_far is not None and len(positives_so_far) else \
        np.empty((0, class_data.d))
    pool_with_x = np.vstack([pool, x[None, :]])
    p = trainer.prob_positive(class_data.X, pool_with_x, x)
    return -p + cfg.eta * penalty_p3(x, pool, c3)


def _sample_seed(cfg_seed: int, k: int, kind: int, t: int) -> int:
    ss = np.random.SeedSequence(cfg_seed + k, spawn_key=(kind, t))
    return int(ss.generate_state(1, np.uint64)[0])


_CAPACITY_STEPS = 7  # escalation grid: base cost times 4**i
_CAPACITY_PROBES = 8


def calibrate_generation_cost(class_data: Dataset, kernel: KernelSpec,
                              base_cost: float, seed: int,
                              tol: float = DEFAULT_TOL,
                              max_passes: int = DEFAULT_MAX_PASSES) -> float:
    """Escalate the discriminator cost until it can carve out candidates
    at the class's own point-spacing scale.

    Probe points sit just outside the data along local outward normals at
    the 90th-percentile nearest-neighbor distance. The smallest cost on
    the grid for which most probes are classified negative after being
    added to the negative side wins; duplicates of training points are
    never separable under equal per-point costs, so escalation cannot
    push generated samples onto the data itself.
    """
    X = class_data.X
    n = len(X)
    if n < 2:
        raise InsufficientDataError("capacity calibration needs >= 2 instances")
    d2 = np.maximum(
        np.einsum("ij,ij->i", X, X)[:, None]
        + np.einsum("ij,ij->i", X, X)[None, :] - 2.0 * (X @ X.T), 0.0
    )
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    delta = float(np.quantile(nn, 0.9))
    if delta <= 0:
        return base_cost

    rng = np.random.default_rng(seed)
    idx = rng.choice(n, min(_CAPACITY_PROBES, n), replace=False)
    n_nb = min(10, n - 1)
    probes = []
    for i in idx:
        neighbors = X[np.argsort(d2[i])[:n_nb]]
        v = X[i] - neighbors.mean(axis=0)
        norm = np.linalg.norm(v)
        if norm <= 0:
            v = rng.normal(size=X.shape[1])
            norm = np.linalg.norm(v)
        probes.append(X[i] + (delta / norm) * v)

    cost = base_cost
    for step in range(_CAPACITY_STEPS):
        carved = 0
        for probe in probes:
            model = fit_binary_arrays(X, probe[None, :], kernel, cost,
                                      tol=tol, max_passes=max_passes)
            carved += predict_prob(model, probe) < 0.5
        if 4 * carved >= 3 * len(probes) or step == _CAPACITY_STEPS - 1:
            return cost
        cost *= 4.0
    return cost


def _generate_for_class(k: int, class_data: Dataset, cfg: GenerationConfig,
                        trainer: DiscriminatorTrainer, optimizer: Minimizer,
                        kind: str, class_negatives: np.ndarray | None
                        ) -> tuple[np.ndarray, np.ndarray, float]:
    if len(class_data) < 2:
        raise InsufficientDataError(
            f"class {k} has {len(class_data)} instances; generation needs >= 2"
        )
    if cfg.calibrate_capacity:
        cost = calibrate_generation_cost(class_data, trainer.kernel,
                                         trainer.cost, cfg.seed + k,
                                         trainer.tol, trainer.max_passes)
        if cost != trainer.cost:
            trainer = DiscriminatorTrainer(trainer.kernel, cost, trainer.tol,
                                           trainer.max_passes)
    box = bounding_box(class_data, cfg.margin_fraction)
    if kind == "neg":
        c_near = _resolve_radius(cfg.c1, class_data, "c1")
        c_spread = _resolve_radius(cfg.c2, class_data, "c2")
        engine = trainer.incremental(class_data.X, np.ones(len(class_data)),
                                     -1.0, cfg.t)
        kind_id = 0
    elif cfg.positives_as_positive_side:
        if class_negatives is None or len(class_negatives) == 0:
            raise DataError(
                "positives_as_positive_side requires generated negatives "
                f"for class {k}"
            )
        c_spread = _resolve_radius(cfg.c3, class_data, "c3")
        X0 = np.vstack([class_data.X, class_negatives])
        y0 = np.concatenate([np.ones(len(class_data)),
                             -np.ones(len(class_negatives))])
        engine = trainer.incremental(X0, y0, 1.0, cfg.t)
        kind_id = 1
    else:
        c_spread = _resolve_radius(cfg.c3, class_data, "c3")
        engine = trainer.incremental(class_data.X, np.ones(len(class_data)),
                                     -1.0, cfg.t)
        kind_id = 1

    lam1, lam2, eta = cfg.lambda1, cfg.lambda2, cfg.eta

    def objective(x: np.ndarray) -> float:
        p = engine.prob_with_candidate(x)
        if kind == "neg":
            value = p
            if lam1:
                value += lam1 * max(0.0, engine.min_dist_to_base(x) - c_near)
            if lam2 and engine.pool_size:
                value += lam2 * max(0.0, c_spread - engine.min_dist_to_pool(x))
        else:
            value = -p
            if eta and engine.pool_size:
                value += eta * max(0.0, c_spread - engine.min_dist_to_pool(x))
        return value

    samples = np.empty((cfg.t, class_data.d))
    diagnostics = np.empty((cfg.t, 2))
    for t in range(cfg.t):
        budget = OptBudget(cfg.opt_budget, _sample_seed(cfg.seed, k, kind_id, t))
        result = optimizer(objective, box, budget)
        value = objective(result.best_x)  # re-evaluates the winner so the engine state matches it
        samples[t] = result.best_x
        diagnostics[t] = (value, engine.last_prob)
        engine.accept_candidate()
    return samples, diagnostics, trainer.cost


def generate_negatives(data: Dataset, cfg: GenerationConfig,
                       trainer: DiscriminatorTrainer,
                       optimizer: Minimizer = minimize_racos
                       ) -> dict[int, np.ndarray]:
    """Generate the per-class pools of boundary negatives."""
    pools, _, _ = _generate_kind(data, cfg, trainer, optimizer, "neg", None)
    return pools


def generate_positives(data: Dataset, cfg: GenerationConfig,
                       trainer: DiscriminatorTrainer,
                       optimizer: Minimizer = minimize_racos,
                       negatives: dict[int, np.ndarray] | None = None
                       ) -> dict[int, np.ndarray]:
    """Generate the per-class pools of synthetic seen-class samples."""
    pools, _, _ = _generate_kind(data, cfg, trainer, optimizer, "pos", negatives)
    return pools


def _generate_kind(data: Dataset, cfg: GenerationConfig,
                   trainer: DiscriminatorTrainer, optimizer: Minimizer,
                   kind: str, negatives: dict[int, np.ndarray] | None
                   ) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray],
                              dict[int, float]]:
    if data.K < 1:
        raise DataError("generation needs at least one seen class")
    pools: dict[int, np.ndarray] = {}
    diags: dict[int, np.ndarray] = {}
    costs: dict[int, float] = {}
    for k in range(1, data.K + 1):
        class_negs = negatives.get(k) if negatives else None
        pools[k], diags[k], costs[k] = _generate_for_class(
            k, class_subset(data, k), cfg, trainer, optimizer, kind, class_negs
        )
    return pools, diags, costs


def generate_pool(data: Dataset, cfg: GenerationConfig,
                  trainer: DiscriminatorTrainer,
                  optimizer: Minimizer = minimize_racos,
                  use_positives: bool = True) -> GeneratedPool:
    """Run negative then (optionally) positive generation for every class."""
    negatives, neg_diags, costs = _generate_kind(data, cfg, trainer, optimizer,
                                                 "neg", None)
    pool = GeneratedPool(negatives=negatives, negative_diagnostics=neg_diags,
                         discriminator_costs=costs)
    if use_positives:
        positives, pos_diags, _ = _generate_kind(
            data, cfg, trainer, optimizer, "pos",
            negatives if cfg.positives_as_positive_side else None,
        )
        pool.positives = positives
        pool.positive_diagnostics = pos_diags
    return pool


def pool_to_csv(pool: GeneratedPool, path: str | Path) -> None:
    """One row per generated vector: class, kind, then the features."""
    path = Path(path)
    d = None
    for source in (pool.negatives, pool.positives):
        for vectors in source.values():
            if len(vectors):
                d = vectors.shape[1]
                break
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "kind"] + [f"f{j}" for j in range(d or 0)])
        for kind, source in (("neg", pool.negatives), ("pos", pool.positives)):
            for k in sorted(source):
                for row in source[k]:
                    writer.writerow([k, kind] + [repr(float(v)) for v in row])


def pool_from_csv(path: str | Path) -> GeneratedPool:
    path = Path(path)
    rows: dict[tuple[str, int], list[list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"empty input: {path}")
        for row in reader:
            if not row:
                continue
            kind = row[1]
            if kind not in ("neg", "pos"):
                raise DataError(f"unknown pool kind {kind!r} in {path}")
            rows.setdefault((kind, int(row[0])), []).append(
                [float(v) for v in row[2:]]
            )
    pool = GeneratedPool()
    for (kind, k), vectors in rows.items():
        target = pool.negatives if kind == "neg" else pool.positives
        target[k] = np.asarray(vectors, dtype=np.float64)
    return pool
