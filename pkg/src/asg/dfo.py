"""Derivative-free minimizers over axis-aligned boxes.

The primary optimizer is a sequential model-based randomized search: it
keeps a small positive set of best-so-far solutions and a buffer of
recent worse ones, learns an axis-aligned sub-box that excludes the
worse solutions, and samples the next candidate from that region with
epsilon-greedy uniform exploration. A pure random-search baseline shares
the same result contract.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .dataset import SearchBox
from .errors import DataError

Objective = Callable[[np.ndarray], float]

# Improvements smaller than this do not reset the early-stop stall window.
STALL_IMPROVEMENT = 1e-12


@dataclass(frozen=True)
class OptBudget:
    """Evaluation budget and RNG seed for one optimization run."""

    max_evaluations: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_evaluations < 1:
            raise DataError(
                f"max_evaluations must be >= 1, got {self.max_evaluations}"
            )


@dataclass(frozen=True)
class RacosParams:
    """Sampler sizes: total population, positive-set size, exploration rate.

    ``uncertain_dims`` is how many coordinates of a drawn candidate stay
    free (sampled from the learned interval) rather than pinned to the
    anchor positive solution; small values sharpen local refinement.
    """

    population: int = 20
    n_positive: int = 2
    epsilon: float = 0.05
    uncertain_dims: int = 1

    def __post_init__(self) -> None:
        if self.population < 2 or not 1 <= self.n_positive < self.population:
            raise DataError("need population >= 2 and 1 <= n_positive < population")
        if not 0 <= self.epsilon <= 1:
            raise DataError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.uncertain_dims < 1:
            raise DataError("uncertain_dims must be >= 1")


@dataclass
class OptResult:
    """Best point found, its value, and the best-so-far trajectory."""

    best_x: np.ndarray
    best_value: float
    evaluations_used: int
    history: list[tuple[int, float]] = field(default_factory=list)


class _Run:
    """Budget accounting, best tracking, early stop, and trace output."""

    def __init__(self, objective: Objective, budget: OptBudget,
                 trace: TextIO | None):
        self.objective = objective
        self.max_evaluations = budget.max_evaluations
        self.stall_window = max(1, budget.max_evaluations // 4)
        self.trace = trace
        self.evaluations = 0
        self.best_x: np.ndarray | None = None
        self.best_value = math.inf
        self.history: list[tuple[int, float]] = []
        self._last_improvement = 0

    def evaluate(self, x: np.ndarray) -> float:
        value = float(self.objective(x))
        if not math.isfinite(value):
            value = math.inf
        self.evaluations += 1
        if self.best_x is None or value < self.best_value:
            if self.best_value - value >= STALL_IMPROVEMENT or self.best_x is None:
                self._last_improvement = self.evaluations
            self.best_value = min(self.best_value, value)
            self.best_x = np.array(x, copy=True)
        self.history.append((self.evaluations, self.best_value))
        if self.trace is not None:
            record = {"evaluation": self.evaluations, "candidate": list(map(float, x)),
                      "value": value}
            self.trace.write(json.dumps(record) + "\n")
        return value

    @property
    def exhausted(self) -> bool:
        return self.evaluations >= self.max_evaluations

    @property
    def stalled(self) -> bool:
        return self.evaluations - self._last_improvement >= self.stall_window

    def result(self) -> OptResult:
        assert self.best_x is not None
        return OptResult(self.best_x, self.best_value, self.evaluations, self.history)


def _uniform_in(rng: np.random.Generator, lower: np.ndarray,
                upper: np.ndarray) -> np.ndarray:
    return rng.uniform(lower, upper)


def _learn_region(rng: np.random.Generator, anchor: np.ndarray,
                  negatives: list[np.ndarray], box: SearchBox) -> tuple[np.ndarray, np.ndarray]:
    """Shrink the box around ``anchor`` until it excludes all negatives.

    Each cut picks a contained negative and a coordinate where it differs
    from the anchor, then moves that bound to a uniform point between the
    two; the anchor always stays inside the region.
    """
    lo = box.lower.copy()
    hi = box.upper.copy()
    d = len(lo)
    alive = list(range(len(negatives)))  # negatives start inside the box
    while alive:
        pick = alive[int(rng.integers(len(alive)))]
        neg = negatives[pick]
        j = -1
        start = int(rng.integers(d))
        for probe in range(d):
            jj = (start + probe) % d
            if neg[jj] != anchor[jj]:
                j = jj
                break
        if j < 0:
            alive.remove(pick)  # exact duplicate of the anchor; cannot cut
            continue
        a = neg[j]
        if a < anchor[j]:
            lo[j] = rng.uniform(a, anchor[j])
        else:
            hi[j] = rng.uniform(anchor[j], a)
        alive = [i for i in alive if lo[j] <= negatives[i][j] <= hi[j]]
    return lo, hi


def minimize_racos(objective: Objective, box: SearchBox, budget: OptBudget,
                   params: RacosParams | None = None,
                   trace: TextIO | None = None) -> OptResult:
    """Model-based randomized search; deterministic for a fixed seed.

    Non-finite objective values are treated as +inf so the offending
    candidate is discarded and the search continues.
    """
    params = params or RacosParams()
    rng = np.random.default_rng(budget.seed)
    run = _Run(objective, budget, trace)

    n_init = min(params.population, budget.max_evaluations)
    xs = [_uniform_in(rng, box.lower, box.upper) for _ in range(n_init)]
    values = [run.evaluate(x) for x in xs]
    order = np.argsort(values, kind="stable")
    n_pos = min(params.n_positive, n_init)
    positives = [(values[i], xs[i]) for i in order[:n_pos]]
    negatives = [xs[i] for i in order[n_pos:]]
    max_negatives = max(params.population - params.n_positive, 1)

    while not run.exhausted and not run.stalled:
        if rng.random() < params.epsilon or not negatives:
            x = _uniform_in(rng, box.lower, box.upper)
        else:
            anchor = positives[int(rng.integers(len(positives)))][1]
            lo, hi = _learn_region(rng, anchor, negatives, box)
            x = anchor.copy()
            for j in rng.permutation(box.d)[: params.uncertain_dims]:
                x[j] = rng.uniform(lo[j], hi[j])
        value = run.evaluate(x)

        worst_pos = positives[-1][0]
        if value < worst_pos:
            positives.append((value, x))
            positives.sort(key=lambda item: item[0])
            displaced = positives.pop()
            negatives.append(displaced[1])
        else:
            negatives.append(x)
        if len(negatives) > max_negatives:
            negatives.pop(0)

    return run.result()


def minimize_random(objective: Objective, box: SearchBox, budget: OptBudget,
                    trace: TextIO | None = None) -> OptResult:
    """Uniform i.i.d. sampling in the box; best-of-budget."""
    rng = np.random.default_rng(budget.seed)
    run = _Run(objective, budget, trace)
    while not run.exhausted and not run.stalled:
        run.evaluate(_uniform_in(rng, box.lower, box.upper))
    return run.result()
