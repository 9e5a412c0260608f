"""Online restricted-assignment load balancing with k predicted weight vectors.

Machine weights induce proportional fractional assignments; the online
combiner averages the streams that still look good for a load bound beta,
dropping a stream once its own running makespan exceeds beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

__all__ = [
    "LoadInstance",
    "CombinerState",
    "CombineFailure",
    "CombineResult",
    "WeightFitError",
    "proportional_row",
    "proportional_assignment",
    "fractional_loads",
    "fractional_makespan",
    "fractional_opt_makespan",
    "fit_good_weights",
    "snap_weights",
    "combine_step",
    "combine_run",
    "combine_with_doubling",
    "harmonic",
    "weight_error",
    "log_weight_distance",
]

# Slack for "running makespan exceeds beta" so float noise at the boundary
# never removes a stream.
BETA_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class LoadInstance:
    """``p[j, i]`` is job j's size on machine i (``inf`` off the neighborhood).

    Restricted-assignment instances have a single size per job; build them
    with :meth:`restricted`.
    """

    m: int
    p: np.ndarray
    nbhd: tuple[tuple[int, ...], ...]
    sizes: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[1] != self.m:
            raise ValueError(f"p must be n x {self.m}")
        if len(self.nbhd) != p.shape[0]:
            raise ValueError("one neighborhood per job")
        nb = tuple(tuple(sorted(set(int(i) for i in N))) for N in self.nbhd)
        for j, N in enumerate(nb):
            if not N:
                raise ValueError(f"job {j} has an empty neighborhood")
            if N[0] < 0 or N[-1] >= self.m:
                raise ValueError(f"job {j} neighborhood outside machines 0..{self.m - 1}")
            inside = p[j, list(N)]
            if not np.all((inside > 0) & np.isfinite(inside)):
                raise ValueError(f"job {j} needs finite positive sizes on its neighborhood")
        mask = np.zeros(p.shape, dtype=bool)
        for j, N in enumerate(nb):
            mask[j, list(N)] = True
        p = np.where(mask, p, np.inf)
        p.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "nbhd", nb)
        if self.sizes is not None:
            s = np.asarray(self.sizes, dtype=float)
            s.flags.writeable = False
            object.__setattr__(self, "sizes", s)

    @classmethod
    def restricted(cls, m: int, sizes: Sequence[float], nbhd: Sequence[Sequence[int]]) -> "LoadInstance":
        sizes = np.asarray(sizes, dtype=float)
        if np.any(sizes <= 0):
            raise ValueError("sizes must be positive")
        p = np.repeat(sizes[:, None], m, axis=1)
        return cls(m=m, p=p, nbhd=tuple(tuple(N) for N in nbhd), sizes=sizes)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def is_restricted(self) -> bool:
        return self.sizes is not None

    def mask(self) -> np.ndarray:
        return np.isfinite(self.p)


def proportional_row(w, neighborhood: Sequence[int], m: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    m = len(w) if m is None else m
    N = list(neighborhood)
    if not N:
        raise ValueError("empty neighborhood")
    row = np.zeros(m)
    row[N] = w[N] / w[N].sum()
    return row


def proportional_assignment(w, inst: LoadInstance) -> np.ndarray:
    """Fractional assignment (n x m) induced by machine weights ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (inst.m,) or np.any(w <= 0):
        raise ValueError("weights must be m strictly positive values")
    mask = inst.mask()
    x = np.where(mask, w[None, :], 0.0)
    return x / x.sum(axis=1, keepdims=True)


def _work(p, x) -> np.ndarray:
    """``p * x`` on the support of ``x``; zero elsewhere (avoids inf * 0)."""
    p, x = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(x, dtype=float))
    return np.multiply(p, x, out=np.zeros(x.shape), where=x > 0)


def fractional_loads(x, inst: LoadInstance) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != inst.p.shape:
        raise ValueError(f"assignment shape {x.shape} != {inst.p.shape}")
    return _work(inst.p, x).sum(axis=0)


def fractional_makespan(x, inst: LoadInstance) -> float:
    return float(fractional_loads(x, inst).max())


def _flow_graph(inst: LoadInstance, T: float) -> nx.DiGraph:
    g = nx.DiGraph()
    for j, N in enumerate(inst.nbhd):
        g.add_edge("s", ("j", j), capacity=float(inst.sizes[j]))
        for i in N:
            g.add_edge(("j", j), ("m", i))  # no capacity attribute = unbounded
    for i in range(inst.m):
        g.add_edge(("m", i), "t", capacity=T)
    return g


def fractional_opt_makespan(inst: LoadInstance) -> float:
    """Smallest fractional makespan via max-flow min-cut.

    Start from a lower bound. While the flow at T cannot route every job,
    the source side of the min cut holds jobs confined to a machine set M,
    so T must be at least their size over |M|. Raise T to that ratio and
    repeat; each step adds machines to the confining set, so at most m
    cuts are needed.
    """
    if not inst.is_restricted:
        raise ValueError("flow oracle needs a restricted-assignment instance")
    sizes = inst.sizes
    total = float(sizes.sum())
    T = max(total / inst.m, max(s / len(N) for s, N in zip(sizes, inst.nbhd)))
    for _ in range(inst.m + 1):
        g = _flow_graph(inst, T)
        value, (side, _) = nx.minimum_cut(g, "s", "t")
        jobs = [v[1] for v in side if v != "s" and v[0] == "j"]
        machines = sum(1 for v in side if v != "s" and v[0] == "m")
        if value >= total * (1 - 1e-9) or machines == 0:
            return float(T)
        T = max(T, float(sizes[jobs].sum()) / machines)
    return float(T)


class WeightFitError(RuntimeError):
    def __init__(self, ratio: float, weights: np.ndarray, rounds: int):
        super().__init__(f"weight fitting stopped at ratio {ratio:.4f} after {rounds} rounds")
        self.ratio = ratio
        self.weights = weights
        self.rounds = rounds


def fit_good_weights(
    inst: LoadInstance,
    eps: float,
    opt: float | None = None,
    max_rounds: int | None = None,
) -> np.ndarray:
    """Multiplicative-update weights whose proportional assignment has
    makespan at most ``(1 + eps)`` times the fractional optimum.

    Overloaded machines lose weight: ``w_i *= exp(-gamma * (L_i / T - 1))``.
    The best weights seen are certified against the flow oracle; if the
    round budget runs out first, :class:`WeightFitError` carries the best
    ratio reached.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    T = fractional_opt_makespan(inst) if opt is None else opt
    if max_rounds is None:
        max_rounds = int(10 * inst.m * math.ceil(1 / eps) * math.log(max(inst.m * inst.n, 2)))
    gamma = 0.5 * eps
    w = np.ones(inst.m)
    best_w, best_ratio = w.copy(), math.inf
    mask = inst.mask()
    P = np.where(mask, inst.p, 0.0)
    for rounds in range(max_rounds + 1):
        x = np.where(mask, w[None, :], 0.0)
        x /= x.sum(axis=1, keepdims=True)
        loads = (P * x).sum(axis=0)
        ratio = loads.max() / T
        if ratio < best_ratio:
            best_w, best_ratio = w.copy(), ratio
        if ratio <= 1 + eps:
            return best_w
        w = w * np.exp(-gamma * (loads / T - 1))
        w /= w.max()
        w = np.maximum(w, 1e-300)
    raise WeightFitError(best_ratio, best_w, max_rounds)


def snap_weights(w, eps: float) -> np.ndarray:
    """Round weights to the grid of (1 + eps/m)-powers, smallest exponent 1."""
    w = np.asarray(w, dtype=float)
    base = 1 + eps / len(w)
    expo = 1 + np.rint(np.log(w / w.min()) / math.log(base))
    return base ** expo


def harmonic(k: int) -> float:
    return sum(1.0 / i for i in range(1, k + 1))


@dataclass
class CombinerState:
    k: int
    m: int
    beta: float
    active: np.ndarray  # bool mask over streams
    stream_loads: np.ndarray  # k x m running loads of each stream's own assignment
    loads: np.ndarray  # m, combined assignment
    contributions: np.ndarray  # k x m, C^l_i
    removal_order: list[int] = field(default_factory=list)
    jobs_seen: int = 0

    @classmethod
    def start(cls, k: int, m: int, beta: float) -> "CombinerState":
        if beta <= 0:
            raise ValueError("beta must be positive")
        return cls(
            k=k,
            m=m,
            beta=float(beta),
            active=np.ones(k, dtype=bool),
            stream_loads=np.zeros((k, m)),
            loads=np.zeros(m),
            contributions=np.zeros((k, m)),
        )

    def full_order(self) -> list[int]:
        """Streams in removal order, never-removed streams last by index."""
        removed = set(self.removal_order)
        return self.removal_order + [l for l in range(self.k) if l not in removed]


class CombineFailure(RuntimeError):
    def __init__(self, job: int, state: CombinerState):
        super().__init__(f"no usable stream for job {job} at beta={state.beta:g}")
        self.job = job
        self.state = state


def combine_step(state: CombinerState, p_row, rows) -> tuple[np.ndarray, CombinerState]:
    """Process one job; ``rows`` is k x m (one fractional row per stream).

    Mutates and returns ``state``. Raises :class:`CombineFailure` when no
    stream is active or none is usable for this job.
    """
    rows = np.asarray(rows, dtype=float)
    p_row = np.asarray(p_row, dtype=float)
    job = state.jobs_seen
    if rows.shape != (state.k, state.m):
        raise ValueError(f"expected {state.k} rows of length {state.m}")
    work = _work(p_row[None, :], rows)
    usable = state.active & np.all(work <= state.beta, axis=1)
    if not state.active.any() or not usable.any():
        raise CombineFailure(job, state)
    alpha = usable / usable.sum()
    row = alpha @ rows
    state.contributions += alpha[:, None] * work
    state.loads += alpha @ work
    state.stream_loads += work
    bad = state.active & (state.stream_loads.max(axis=1) > state.beta + BETA_SLACK * max(1.0, state.beta))
    # Streams not usable for this job go first so every usable one keeps
    # at least k - position + 1 usable peers.
    newly = sorted(np.flatnonzero(bad), key=lambda l: (bool(usable[l]), l))
    state.removal_order.extend(int(l) for l in newly)
    state.active &= ~bad
    state.jobs_seen += 1
    return row, state


@dataclass
class CombineResult:
    assignment: np.ndarray
    makespan: float
    beta: float
    state: CombinerState
    doublings: int = 0


def _stack_streams(inst: LoadInstance, streams) -> np.ndarray:
    X = np.asarray(streams, dtype=float)
    if X.ndim != 3 or X.shape[1:] != inst.p.shape:
        raise ValueError("streams must be k x n x m")
    return X


def combine_run(inst: LoadInstance, streams, beta: float) -> CombineResult:
    """Run the combiner over all jobs with a fixed beta."""
    X = _stack_streams(inst, streams)
    state = CombinerState.start(X.shape[0], inst.m, beta)
    out = np.zeros(inst.p.shape)
    for j in range(inst.n):
        out[j], state = combine_step(state, inst.p[j], X[:, j, :])
    return CombineResult(out, float(state.loads.max()), float(beta), state)


def initial_beta(inst: LoadInstance, streams) -> float:
    X = _stack_streams(inst, streams)
    work = _work(inst.p[0][None, :], X[:, 0, :])
    return float(work.max(axis=1).min())


def combine_with_doubling(inst: LoadInstance, streams, beta0: float | None = None) -> CombineResult:
    """Guess-and-double wrapper for an unknown beta.

    On failure at job j, beta doubles, every stream becomes active again,
    and job j is retried; the combined loads built so far are kept.
    """
    X = _stack_streams(inst, streams)
    k = X.shape[0]
    beta = initial_beta(inst, X) if beta0 is None else float(beta0)
    state = CombinerState.start(k, inst.m, beta)
    out = np.zeros(inst.p.shape)
    doublings = 0
    j = 0
    while j < inst.n:
        try:
            out[j], state = combine_step(state, inst.p[j], X[:, j, :])
        except CombineFailure:
            doublings += 1
            state.beta *= 2
            state.active[:] = True
            state.removal_order.clear()
            continue
        j += 1
    return CombineResult(out, float(state.loads.max()), state.beta, state, doublings)


def _check_weights(w, wprime):
    w = np.asarray(w, dtype=float)
    wprime = np.asarray(wprime, dtype=float)
    if w.shape != wprime.shape:
        raise ValueError("weight vectors differ in length")
    if np.any(w <= 0) or np.any(wprime <= 0):
        raise ValueError("weights must be strictly positive")
    return w, wprime


def weight_error(w, wprime) -> float:
    w, wprime = _check_weights(w, wprime)
    return float(np.max(np.maximum(w / wprime, wprime / w)))


def log_weight_distance(w, wprime) -> float:
    """``log`` of :func:`weight_error`; a metric on positive vectors."""
    w, wprime = _check_weights(w, wprime)
    return float(np.max(np.abs(np.log(w) - np.log(wprime))))
