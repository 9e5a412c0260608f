"""k-median over finite cost spaces and the ERM learners built on it.

Every learner turns its samples into candidate centers, fills a
point-by-candidate cost matrix and runs single-swap local search.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .loadbal import LoadInstance, WeightFitError, fit_good_weights, snap_weights
from .matching import MatchingInstance, optimal_dual
from .sched import JobSet, inversion_error, sjf_opt

__all__ = [
    "CostSpace",
    "Clustering",
    "ErmResult",
    "kmedian_local_search",
    "kmedian_sweep",
    "dual_space",
    "weight_space",
    "permutation_space",
    "centers_of",
    "erm_duals",
    "erm_weights",
    "erm_permutations",
]

REL_IMPROVEMENT = 1e-9


@dataclass(frozen=True)
class CostSpace:
    """``cost[p, c]`` is the price of serving point p from candidate c.

    ``metric`` is set only when the space is declared a pseudo-metric; it
    then evaluates the distance between any two items of points or
    candidates.
    """

    cost: np.ndarray
    points: Sequence = ()
    candidates: Sequence = ()
    metric: Callable | None = None

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float)
        if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] == 0:
            raise ValueError("cost must be a nonempty points x candidates matrix")
        if not np.all(np.isfinite(c)) or c.min() < 0:
            raise ValueError("costs must be finite and nonnegative")
        object.__setattr__(self, "cost", c)

    @classmethod
    def from_function(cls, points, cost, candidates=None, metric: bool = False) -> "CostSpace":
        points = list(points)
        candidates = points if candidates is None else list(candidates)
        matrix = np.array([[cost(p, c) for c in candidates] for p in points], dtype=float)
        return cls(matrix, points, candidates, cost if metric else None)

    @property
    def n_points(self) -> int:
        return self.cost.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.cost.shape[1]

    def objective(self, centers) -> float:
        return float(self.cost[:, list(centers)].min(axis=1).sum())

    def metric_violations(self, rng: np.random.Generator, trials: int = 500, tol: float = 1e-9) -> int:
        """Spot-check symmetry and the triangle inequality on random triples."""
        if self.metric is None:
            raise ValueError("space is not declared a pseudo-metric")
        items = list(self.points) + list(self.candidates)
        bad = 0
        for _ in range(trials):
            a, b, c = (items[i] for i in rng.integers(0, len(items), 3))
            ab, ba = self.metric(a, b), self.metric(b, a)
            scale = 1 + abs(ab)
            if abs(ab - ba) > tol * scale or ab > self.metric(a, c) + self.metric(c, b) + tol * scale:
                bad += 1
        return bad


@dataclass(frozen=True)
class Clustering:
    centers: tuple[int, ...]
    assignment: tuple[int, ...]
    objective: float
    iterations: int = 0
    history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return len(self.centers)

    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(sum(1 for a in self.assignment if a == c) for c in self.centers)


def _seed(cost: np.ndarray, k: int) -> list[int]:
    """Farthest-point seeding, starting from the first point."""
    centers = [int(np.argmin(cost[0]))]
    while len(centers) < k:
        reach = cost[:, centers].min(axis=1)
        far = int(np.argmax(reach))
        row = cost[far].copy()
        row[centers] = np.inf
        centers.append(int(np.argmin(row)))
    return centers


def _finish(space: CostSpace, centers, iterations, history) -> Clustering:
    sub = space.cost[:, centers]
    nearest = sub.argmin(axis=1)
    return Clustering(
        centers=tuple(int(c) for c in centers),
        assignment=tuple(int(centers[i]) for i in nearest),
        objective=float(sub.min(axis=1).sum()),
        iterations=iterations,
        history=tuple(history),
    )


def kmedian_local_search(space: CostSpace, k: int, max_iters: int = 1000, init: Sequence[int] | None = None) -> Clustering:
    """Best-improvement single-swap local search.

    Stops when no swap of a center for a non-center candidate improves the
    objective by more than a relative 1e-9, or after ``max_iters`` swaps.
    Ties go to the lowest (center slot, candidate) pair.
    """
    cost = space.cost
    if not 1 <= k <= space.n_candidates:
        raise ValueError(f"k={k} must lie in [1, {space.n_candidates}]")
    centers = list(init) if init is not None else _seed(cost, k)
    if len(centers) != k or len(set(centers)) != k:
        raise ValueError("init must list k distinct candidates")

    objective = space.objective(centers)
    history = [objective]
    iterations = 0
    while iterations < max_iters and objective > 0:
        sub = cost[:, centers]
        if k == 1:
            without = np.full((cost.shape[0], 1), np.inf)
        else:
            # best cost of each point when slot i is removed
            without = np.stack([np.delete(sub, i, axis=1).min(axis=1) for i in range(k)], axis=1)
        swapped = np.minimum(without.T[:, :, None], cost[None, :, :]).sum(axis=1)
        swapped[:, centers] = np.inf
        slot, cand = np.unravel_index(int(np.argmin(swapped)), swapped.shape)
        best = float(swapped[slot, cand])
        if not best < objective - REL_IMPROVEMENT * objective:
            break
        centers[slot] = int(cand)
        objective = best
        history.append(objective)
        iterations += 1
    return _finish(space, centers, iterations, history)


def kmedian_sweep(space: CostSpace, ks: Sequence[int], max_iters: int = 1000) -> dict[int, Clustering]:
    """Solve for each k in increasing order, warm-starting from the previous
    solution plus its best single addition, so objectives never increase."""
    out: dict[int, Clustering] = {}
    prev: list[int] | None = None
    for k in sorted(ks):
        init = None
        if prev is not None and len(prev) < k:
            init = list(prev)
            while len(init) < k:
                reach = space.cost[:, init].min(axis=1)
                gains = np.minimum(reach[:, None], space.cost).sum(axis=0)
                gains[init] = np.inf
                init.append(int(np.argmin(gains)))
        res = kmedian_local_search(space, k, max_iters, init)
        out[k] = res
        prev = list(res.centers)
    return out


@dataclass(frozen=True)
class ErmResult:
    items: list
    clustering: Clustering
    excluded: tuple[int, ...] = field(default=())


def _l1_matrix(vectors: np.ndarray) -> np.ndarray:
    return np.abs(vectors[:, None, :] - vectors[None, :, :]).sum(axis=2)


def _log_distance_matrix(weights: np.ndarray) -> np.ndarray:
    logs = np.log(weights)
    return np.abs(logs[:, None, :] - logs[None, :, :]).max(axis=2)


def dual_space(instances: Sequence[MatchingInstance]) -> CostSpace:
    """Optimal duals of the samples under l1; candidates are the points."""
    duals = [optimal_dual(inst) for inst in instances]
    vecs = np.array([[float(v) for v in y.values()] for y in duals])
    return CostSpace(_l1_matrix(vecs), duals, duals)


def weight_space(instances: Sequence[LoadInstance], eps: float) -> tuple[CostSpace, tuple[int, ...]]:
    """Certified good weights of the samples under the log-ratio distance.

    Samples whose weights cannot be certified are left out; their indices
    come back alongside the space.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    fitted, excluded = [], []
    for s, inst in enumerate(instances):
        try:
            fitted.append(fit_good_weights(inst, eps))
        except WeightFitError:
            excluded.append(s)
    if not fitted:
        raise ValueError("no sample produced certified weights")
    if len({len(w) for w in fitted}) != 1:
        raise ValueError("samples must share the machine count")
    W = np.array(fitted, dtype=float)
    return CostSpace(_log_distance_matrix(W), list(W), list(W)), tuple(excluded)


def permutation_space(jobsets: Sequence[JobSet]) -> CostSpace:
    """Candidates are the samples' SJF orders; a sample pays its inversion
    error against the center."""
    if not jobsets:
        raise ValueError("need at least one sample")
    if len({J.n for J in jobsets}) != 1:
        raise ValueError("samples must share n")
    orders = [sjf_opt(J)[0] for J in jobsets]
    cost = np.array([[inversion_error(J, sigma) for sigma in orders] for J in jobsets])
    return CostSpace(cost, list(jobsets), orders)


def centers_of(space: CostSpace, res: Clustering, eps: float | None = None) -> list:
    """Candidate items chosen by ``res``; weights are snapped when ``eps`` is given."""
    items = [space.candidates[c] for c in res.centers]
    return [snap_weights(w, eps) for w in items] if eps is not None else items


def erm_duals(instances: Sequence[MatchingInstance], k: int, max_iters: int = 1000) -> ErmResult:
    space = dual_space(instances)
    res = kmedian_local_search(space, k, max_iters)
    return ErmResult(centers_of(space, res), res)


def erm_weights(instances: Sequence[LoadInstance], k: int, eps: float, max_iters: int = 1000) -> ErmResult:
    space, excluded = weight_space(instances, eps)
    res = kmedian_local_search(space, k, max_iters)
    return ErmResult(centers_of(space, res, eps), res, excluded)


def erm_permutations(jobsets: Sequence[JobSet], k: int, max_iters: int = 1000) -> ErmResult:
    space = permutation_space(jobsets)
    res = kmedian_local_search(space, k, max_iters)
    return ErmResult(centers_of(space, res), res)
