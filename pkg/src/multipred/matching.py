"""Min-cost perfect bipartite matching warm-started from predicted duals.

Instances are dense (complete bipartite) with integer costs. Duals are kept
exact: plain ``int`` whenever possible, ``fractions.Fraction`` otherwise, so
feasibility checks never depend on floating-point rounding.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "MatchingInstance",
    "DualVector",
    "PerfectMatching",
    "SolveStats",
    "InfeasibleDualError",
    "dual_feasible",
    "dual_objective",
    "make_feasible",
    "select_best_dual",
    "hungarian_with_duals",
    "k_predicted_primal_dual",
    "l1_error",
    "optimal_dual",
    "zero_dual",
]


class InfeasibleDualError(ValueError):
    """Raised when a primal-dual solve is started from an infeasible dual."""


def _exact(x):
    """Convert a number to an exact int or Fraction."""
    if isinstance(x, bool):
        raise TypeError("bool is not a dual value")
    if isinstance(x, numbers.Integral):
        return int(x)
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else x
    if isinstance(x, numbers.Real):
        f = Fraction(float(x))
        return int(f) if f.denominator == 1 else f
    raise TypeError(f"not a real number: {x!r}")


@dataclass(frozen=True)
class MatchingInstance:
    n: int
    cost: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(c) for c in row) for row in self.cost)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(rows) != self.n or any(len(r) != self.n for r in rows):
            raise ValueError(f"cost must be {self.n}x{self.n}")
        for row_in, row in zip(self.cost, rows):
            for a, b in zip(row_in, row):
                if a != b:
                    raise ValueError(f"cost entries must be integers, got {a!r}")
        object.__setattr__(self, "cost", rows)

    @classmethod
    def from_matrix(cls, cost) -> "MatchingInstance":
        arr = np.asarray(cost)
        return cls(n=int(arr.shape[0]), cost=tuple(map(tuple, arr.tolist())))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.cost, dtype=np.int64)


@dataclass(frozen=True)
class DualVector:
    left: tuple
    right: tuple

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(_exact(v) for v in self.left))
        object.__setattr__(self, "right", tuple(_exact(v) for v in self.right))
        if len(self.left) != len(self.right):
            raise ValueError("left and right duals must have equal length")

    @property
    def n(self) -> int:
        return len(self.left)

    def values(self) -> tuple:
        return self.left + self.right


def zero_dual(n: int) -> DualVector:
    return DualVector((0,) * n, (0,) * n)


@dataclass(frozen=True)
class PerfectMatching:
    pairing: tuple[int, ...]  # pairing[i] = right vertex matched to left i
    total_cost: int


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    chosen_index: int = 0
    feasibility_repair_time: int = 0
    final_duals: DualVector | None = None
    dual_objectives: tuple = field(default=())


def _check_dims(inst: MatchingInstance, y: DualVector) -> None:
    if y.n != inst.n:
        raise ValueError(f"dual has {y.n} vertices per side, instance has {inst.n}")


def dual_feasible(inst: MatchingInstance, y: DualVector) -> bool:
    _check_dims(inst, y)
    for i, row in enumerate(inst.cost):
        yi = y.left[i]
        for j, c in enumerate(row):
            if yi + y.right[j] > c:
                return False
    return True


def dual_objective(y: DualVector):
    return sum(y.left) + sum(y.right)


def make_feasible(inst: MatchingInstance, yhat: DualVector) -> DualVector:
    """Repair a predicted dual in one pass over the edges.

    Left duals are kept; each right dual becomes the tightest value allowed
    by its column, ``min_i cost[i][j] - left[i]``.
    """
    _check_dims(inst, yhat)
    left = yhat.left
    right = [min(inst.cost[i][j] - left[i] for i in range(inst.n)) for j in range(inst.n)]
    return DualVector(left, tuple(right))


def select_best_dual(feasible: Sequence[DualVector]) -> int:
    if not feasible:
        raise ValueError("no duals to select from")
    best, best_obj = 0, dual_objective(feasible[0])
    for idx in range(1, len(feasible)):
        obj = dual_objective(feasible[idx])
        if obj > best_obj:
            best, best_obj = idx, obj
    return best


def _tight_matching(cost, u, v, n):
    """Maximum matching on the tight subgraph (Kuhn's augmenting paths)."""
    adj = [[j for j in range(n) if u[i] + v[j] == cost[i][j]] for i in range(n)]
    match_right = [-1] * n

    def augment(i, seen):
        for j in adj[i]:
            if seen[j]:
                continue
            seen[j] = True
            if match_right[j] == -1 or augment(match_right[j], seen):
                match_right[j] = i
                return True
        return False

    for i in range(n):
        augment(i, [False] * n)
    return match_right


def hungarian_with_duals(inst: MatchingInstance, y: DualVector) -> tuple[PerfectMatching, SolveStats]:
    """Solve the instance starting from feasible duals ``y``.

    The tight subgraph of ``y`` is matched first; every remaining free left
    vertex costs one phase (Dijkstra on reduced costs, dual update, single
    augmentation). ``SolveStats.iterations`` is that phase count, so an
    exactly optimal start costs zero phases.
    """
    if not dual_feasible(inst, y):
        raise InfeasibleDualError("starting dual violates y_i + y_j <= c_ij")
    n, cost = inst.n, inst.cost
    # 1-indexed potentials/columns; column 0 is the virtual root.
    u = [0] + list(y.left)
    v = [0] + list(y.right)
    p = [0] * (n + 1)  # p[j] = left vertex matched to right j (1-indexed), 0 if free
    for j, i in enumerate(_tight_matching(cost, y.left, y.right, n)):
        if i >= 0:
            p[j + 1] = i + 1
    matched = {p[j] for j in range(1, n + 1) if p[j]}
    free_rows = [i for i in range(1, n + 1) if i not in matched]

    inf = float("inf")
    way = [0] * (n + 1)
    for i in free_rows:
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = inf, 0
            row = cost[i0 - 1]
            ui0 = u[i0]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    pairing = [-1] * n
    for j in range(1, n + 1):
        pairing[p[j] - 1] = j - 1
    total = sum(cost[i][pairing[i]] for i in range(n))
    final = DualVector(tuple(u[1:]), tuple(v[1:]))
    return PerfectMatching(tuple(pairing), total), SolveStats(iterations=len(free_rows), final_duals=final)


def k_predicted_primal_dual(
    inst: MatchingInstance, portfolio: Sequence[DualVector]
) -> tuple[PerfectMatching, SolveStats]:
    """Repair every prediction, keep the one with the largest dual objective,
    and warm-start the primal-dual solver from it."""
    if not portfolio:
        raise ValueError("empty portfolio")
    repaired = [make_feasible(inst, yhat) for yhat in portfolio]
    chosen = select_best_dual(repaired)
    matching, stats = hungarian_with_duals(inst, repaired[chosen])
    return matching, SolveStats(
        iterations=stats.iterations,
        chosen_index=chosen,
        feasibility_repair_time=len(portfolio) * inst.n * inst.n,
        final_duals=stats.final_duals,
        dual_objectives=tuple(dual_objective(y) for y in repaired),
    )


def l1_error(y: DualVector, yprime: DualVector):
    if y.n != yprime.n:
        raise ValueError("dual vectors differ in size")
    return sum(abs(a - b) for a, b in zip(y.values(), yprime.values()))


def optimal_dual(inst: MatchingInstance) -> DualVector:
    """An exact optimal dual, from a solve started at the repaired zero dual."""
    _, stats = hungarian_with_duals(inst, make_feasible(inst, zero_dual(inst.n)))
    return stats.final_duals
