"""Non-clairvoyant single-machine scheduling with k predicted job orders.

The simulator knows the true sizes; the multi-prediction scheduler only
learns that a job finished. Scheduling decisions compare integer size
levels (powers of ``1 + eps`` after randomized rounding), while elapsed
virtual time always accrues true processing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "JobSet",
    "ScheduleResult",
    "SchedConfig",
    "RoundRecord",
    "RoundTrace",
    "SchedulerState",
    "PercentileEstimate",
    "check_permutation",
    "sequence_cost",
    "sjf_opt",
    "inversion_error",
    "round_robin",
    "round_sizes",
    "size_levels",
    "estimate_percentile",
    "classify_sequences",
    "scheduler_round",
    "run_multi_prediction_scheduler",
    "preferential_time_share",
]


@dataclass(frozen=True)
class JobSet:
    sizes: tuple[float, ...]

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        if not sizes:
            raise ValueError("a job set needs at least one job")
        if any(not (s > 0 and math.isfinite(s)) for s in sizes):
            raise ValueError("job sizes must be finite and positive")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return len(self.sizes)

    def array(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=float)


def check_permutation(sigma: Sequence[int], n: int) -> np.ndarray:
    order = np.asarray(sigma, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}")
    return order


@dataclass(frozen=True)
class ScheduleResult:
    completion: tuple[float, ...]

    @property
    def total(self) -> float:
        return math.fsum(self.completion)

    @classmethod
    def from_array(cls, c) -> "ScheduleResult":
        return cls(tuple(float(x) for x in c))


def sequence_cost(J: JobSet, sigma: Sequence[int]) -> float:
    order = check_permutation(sigma, J.n)
    return float(np.cumsum(J.array()[order]).sum())


def sjf_opt(J: JobSet) -> tuple[tuple[int, ...], float]:
    order = np.argsort(J.array(), kind="stable")
    return tuple(int(j) for j in order), sequence_cost(J, order)


def inversion_error(J: JobSet, sigma: Sequence[int]) -> float:
    """Sum of ``|p_i - p_j|`` over pairs the order puts larger-first.

    Equal sizes never count.
    """
    order = check_permutation(sigma, J.n)
    p = J.array()
    pos = np.empty(J.n, dtype=np.int64)
    pos[order] = np.arange(J.n)
    total = 0.0
    chunk = max(1, 4_000_000 // J.n)
    for start in range(0, J.n, chunk):
        rows = slice(start, start + chunk)
        # row job i is strictly larger but scheduled before column job j
        inverted = (p[rows, None] > p[None, :]) & (pos[rows, None] < pos[None, :])
        total += float(np.where(inverted, p[rows, None] - p[None, :], 0.0).sum())
    return total


def _rr_completions(p: np.ndarray, speed: float = 1.0) -> np.ndarray:
    """Processor-sharing completion times, all jobs released at 0."""
    n = len(p)
    order = np.argsort(p, kind="stable")
    ps = p[order]
    # the i-th smallest job ends once every smaller job is done and the
    # n - i survivors have each received ps[i]; equal sizes tie naturally
    before = np.concatenate(([0.0], np.cumsum(ps)[:-1]))
    out = np.empty(n)
    out[order] = (before + (n - np.arange(n)) * ps) / speed
    return out


def round_robin(J: JobSet, speed: float = 1.0) -> ScheduleResult:
    if speed <= 0:
        raise ValueError("speed must be positive")
    return ScheduleResult.from_array(_rr_completions(J.array(), speed))


def size_levels(sizes, eps: float, rho: float) -> np.ndarray:
    """Smallest integer ``t`` with ``size <= (1 + eps) ** (rho + t)``."""
    p = np.asarray(sizes, dtype=float)
    b = 1.0 + eps
    t = np.ceil(np.log(p) / math.log(b) - rho).astype(np.int64)
    t += (b ** (rho + t) < p)
    t -= (b ** (rho + t - 1) >= p)
    return t


def round_sizes(J: JobSet, eps: float, rho: float) -> JobSet:
    """Round up to ``(1 + eps) ** (rho + t)``, then divide by ``(1 + eps) ** rho``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    t = size_levels(J.array(), eps, rho)
    return JobSet(tuple((1.0 + eps) ** t))


@dataclass(frozen=True)
class SchedConfig:
    """Parameters of the multi-prediction scheduler.

    ``sample_size`` and ``terminal_size`` override the mode's formulas; they
    exist for desk-scale experiments where the asymptotic thresholds would
    send every instance straight to round-robin.
    """

    eps: float = 0.2
    mode: str = "improved"
    c_s: float = 2.0
    bad_multiplier: float = 2.0
    seed: int = 0
    share: float | None = None
    rounding: bool = True
    sample_size: int | None = None
    terminal_size: float | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 0.25:
            raise ValueError("eps must lie in (0, 1/4]")
        if self.mode not in ("basic", "improved"):
            raise ValueError("mode must be 'basic' or 'improved'")
        if self.c_s <= 0 or self.bad_multiplier <= 0:
            raise ValueError("constants must be positive")
        if self.share is not None and not 0 < self.share < 1:
            raise ValueError("share must lie in (0, 1)")

    @property
    def share_fraction(self) -> float:
        return self.eps if self.share is None else self.share

    def _improved_s(self, n: int, k: int) -> int:
        eps = self.eps
        inner = k * eps ** -3 * math.log(max(n, 3))
        return math.ceil(self.c_s / eps**2 * math.log(inner))

    def step1_sample_size(self, n: int, k: int) -> int:
        if self.sample_size is not None:
            return self.sample_size
        if self.mode == "basic":
            return math.ceil(math.log(max(n, 2)) / self.eps**2)
        return self._improved_s(n, k)

    def step2_sample_size(self, n: int, k: int) -> int:
        if self.sample_size is not None:
            return self.sample_size
        if self.mode == "basic":
            return math.ceil((math.log(max(n, 2)) + math.log(k)) / self.eps**2)
        return self._improved_s(n, k)

    def terminal_threshold(self, n: int, k: int) -> float:
        if self.terminal_size is not None:
            return self.terminal_size
        if self.mode == "basic":
            return (math.log(max(n, 2)) + math.log(k)) / self.eps**4
        return 8 * self._improved_s(n, k) / self.eps**2


@dataclass(frozen=True)
class PercentileEstimate:
    q_tilde: float
    level: int
    y_tilde: int
    time_spent: float
    completed: int
    sample_size: int


def _estimate(p, t, value_of, n_r, s, eps, rng) -> PercentileEstimate:
    """Round-robin a with-replacement sample until the ceil(eps*s)-th copy
    finishes; every copy at or below that copy's level finishes with it."""
    idx = rng.integers(0, n_r, size=s)
    tl = t[idx]
    m = math.ceil(eps * s)
    q_level = int(np.sort(tl, kind="stable")[m - 1])
    done = tl <= q_level
    completed = int(done.sum())
    y_tilde = min(max(int(round(completed / s * n_r)), 1), n_r)
    last = p[idx][done].max()
    time_spent = float(np.minimum(p[idx], last).sum())
    return PercentileEstimate(float(value_of(q_level)), q_level, y_tilde, time_spent, completed, s)


def _levels_for(sizes: np.ndarray, cfg: SchedConfig, rho: float | None):
    """Integer levels plus a level -> size map."""
    if cfg.rounding and rho is not None:
        base = 1.0 + cfg.eps
        return size_levels(sizes, cfg.eps, rho), lambda lv: base ** (rho + lv)
    values, inverse = np.unique(sizes, return_inverse=True)
    return inverse.astype(np.int64), lambda lv: values[lv]


def estimate_percentile(
    sizes, cfg: SchedConfig, rng: np.random.Generator, *, n: int | None = None, k: int = 1, rho: float | None = None
) -> PercentileEstimate:
    """Estimate the eps-percentile size of the alive jobs and how many jobs
    are no bigger than it. ``rho=None`` disables size rounding.

    ``n`` (the original instance size) sets the sample size; defaults to
    the number of alive jobs.
    """
    p = np.asarray(sizes, dtype=float)
    n_r = len(p)
    t, value_of = _levels_for(p, cfg, rho)
    s = cfg.step1_sample_size(n or n_r, k)
    return _estimate(p, t, value_of, n_r, s, cfg.eps, rng)


def _classify(prefixes, is_big, work, n_r, s, eps, mult, rng):
    good, time_spent = [], 0.0
    for prefix in prefixes:
        prefix = np.asarray(prefix, dtype=np.int64)
        picked = prefix[rng.integers(0, len(prefix), size=s)]
        big_count = is_big[picked].mean() * len(prefix)
        good.append(bool(big_count < mult * eps**2 * n_r))
        time_spent += float(work[picked].sum())
    return good, time_spent


def classify_sequences(
    sizes, prefixes, q_tilde: float, n_r: int, cfg: SchedConfig, rng: np.random.Generator, *, n: int | None = None
) -> tuple[list[bool], float]:
    """Label each prefix good (True) or bad (False).

    A sampled copy is processed for at most ``q_tilde``; it is big if it
    does not finish. The prefix's big-job count is estimated as the sampled
    big fraction times the prefix length, and the prefix is bad once that
    reaches ``bad_multiplier * eps**2 * n_r``.
    """
    p = np.asarray(sizes, dtype=float)
    is_big = p > q_tilde
    work = np.minimum(p, q_tilde)
    s = cfg.step2_sample_size(n or n_r, len(prefixes))
    return _classify(prefixes, is_big, work, n_r, s, cfg.eps, cfg.bad_multiplier, rng)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    n_r: int
    start: float
    q_tilde: float
    y_tilde: int
    estimation_time: float
    labels: tuple[bool, ...]
    action: str
    T_r: float
    completed: tuple[int, ...]
    failure: bool = False
    failure_reasons: tuple[str, ...] = ()

    @property
    def is_final(self) -> bool:
        return self.action == "final-RR"


@dataclass
class RoundTrace:
    rho: float | None
    rounds: list[RoundRecord] = field(default_factory=list)

    def partition(self) -> list[tuple[int, ...]]:
        return [r.completed for r in self.rounds]

    def rows(self) -> list[dict]:
        return [
            {
                "round": r.round,
                "n_r": r.n_r,
                "q_tilde": r.q_tilde,
                "y_tilde": r.y_tilde,
                "action": r.action,
                "T_r": r.T_r,
                "completed": len(r.completed),
            }
            for r in self.rounds
        ]


@dataclass
class SchedulerState:
    p: np.ndarray
    levels: np.ndarray
    value_of: object
    perms: list[np.ndarray]
    alive: np.ndarray
    completion: np.ndarray
    time: float
    trace: RoundTrace

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def k(self) -> int:
        return len(self.perms)

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    @classmethod
    def start(cls, J: JobSet, portfolio, cfg: SchedConfig, rho: float | None) -> "SchedulerState":
        p = J.array()
        perms = [check_permutation(s, J.n) for s in portfolio]
        if not perms:
            raise ValueError("need at least one predicted order")
        levels, value_of = _levels_for(p, cfg, rho)
        return cls(
            p=p,
            levels=levels,
            value_of=value_of,
            perms=perms,
            alive=np.ones(J.n, dtype=bool),
            completion=np.full(J.n, np.nan),
            time=0.0,
            trace=RoundTrace(rho=rho),
        )


def _audit(levels_alive, q_level, y_tilde, prefixes, good, is_big, eps) -> list[str]:
    """Check the round's estimates against the hidden sizes."""
    n_r = len(levels_alive)
    reasons = []
    below = int((levels_alive < q_level).sum())
    at_most = int((levels_alive <= q_level).sum())
    if at_most < eps * (1 - eps) * n_r or below + 1 > eps * (1 + eps) * n_r:
        reasons.append("percentile-rank")
    if abs(y_tilde - at_most) > eps**2 * n_r:
        reasons.append("y-estimate")
    for l, (prefix, g) in enumerate(zip(prefixes, good)):
        big = int(is_big[prefix].sum())
        if (g and big > 3 * eps**2 * n_r) or (not g and big < eps**2 * n_r):
            reasons.append(f"label-{l}")
    return reasons


def scheduler_round(state: SchedulerState, cfg: SchedConfig, rng: np.random.Generator) -> SchedulerState:
    """One estimate / classify / process round; mutates and returns ``state``."""
    eps = cfg.eps
    alive_ids = np.flatnonzero(state.alive)
    n_r = len(alive_ids)
    start = state.time

    est = _estimate(
        state.p[alive_ids], state.levels[alive_ids], state.value_of, n_r, cfg.step1_sample_size(state.n, state.k), eps, rng
    )
    Q = est.q_tilde
    is_big = state.levels > est.level
    work = np.where(is_big, Q, state.p)
    prefixes = [perm[state.alive[perm]][: est.y_tilde] for perm in state.perms]
    good, step2_time = _classify(
        prefixes, is_big, work, n_r, cfg.step2_sample_size(state.n, state.k), eps, cfg.bad_multiplier, rng
    )
    estimation_time = est.time_spent + step2_time
    state.time += estimation_time

    if any(good):
        chosen = good.index(True)
        jobs = prefixes[chosen]
        action = f"follow-{chosen}"
    else:
        jobs = alive_ids
        action = "process-all"
    finish = state.time + np.cumsum(work[jobs])
    small = ~is_big[jobs]
    done = jobs[small]
    state.completion[done] = finish[small]
    state.alive[done] = False
    if len(jobs):
        state.time = float(finish[-1])

    reasons = _audit(state.levels[alive_ids], est.level, est.y_tilde, prefixes, good, is_big, eps)
    if len(done) == 0:
        reasons.append("no-progress")
    state.trace.rounds.append(
        RoundRecord(
            round=len(state.trace.rounds) + 1,
            n_r=n_r,
            start=start,
            q_tilde=Q,
            y_tilde=est.y_tilde,
            estimation_time=estimation_time,
            labels=tuple(good),
            action=action,
            T_r=state.time - start,
            completed=tuple(int(j) for j in done),
            failure=bool(reasons),
            failure_reasons=tuple(reasons),
        )
    )
    return state


def _finish_with_rr(state: SchedulerState) -> None:
    alive_ids = np.flatnonzero(state.alive)
    start = state.time
    if len(alive_ids):
        c = start + _rr_completions(state.p[alive_ids])
        state.completion[alive_ids] = c
        state.alive[alive_ids] = False
        state.time = float(c.max())
    state.trace.rounds.append(
        RoundRecord(
            round=len(state.trace.rounds) + 1,
            n_r=len(alive_ids),
            start=start,
            q_tilde=math.nan,
            y_tilde=0,
            estimation_time=0.0,
            labels=(),
            action="final-RR",
            T_r=state.time - start,
            completed=tuple(int(j) for j in alive_ids),
        )
    )


MAX_STALLED_ROUNDS = 50


def run_multi_prediction_scheduler(
    J: JobSet, portfolio, cfg: SchedConfig, rng: np.random.Generator | None = None
) -> tuple[ScheduleResult, RoundTrace]:
    """Schedule J using k predicted orders.

    Rounds run while more than ``cfg.terminal_threshold(n, k)`` jobs are
    alive; round-robin finishes the rest.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    rho = float(rng.random()) if cfg.rounding else None
    state = SchedulerState.start(J, portfolio, cfg, rho)
    threshold = cfg.terminal_threshold(state.n, state.k)
    stalled = 0
    while state.n_alive > threshold and stalled < MAX_STALLED_ROUNDS:
        scheduler_round(state, cfg, rng)
        stalled = stalled + 1 if not state.trace.rounds[-1].completed else 0
    _finish_with_rr(state)
    return ScheduleResult.from_array(state.completion), state.trace


def preferential_time_share(
    J: JobSet, portfolio, cfg: SchedConfig, rng: np.random.Generator | None = None
) -> ScheduleResult:
    """Run the scheduler at speed ``1 - share`` and round-robin at speed
    ``share`` side by side; each job finishes at the earlier of the two."""
    share = cfg.share_fraction
    ours, _ = run_multi_prediction_scheduler(J, portfolio, cfg, rng)
    slowed = np.asarray(ours.completion) / (1 - share)
    rr = _rr_completions(J.array(), share)
    return ScheduleResult.from_array(np.minimum(slowed, rr))
