"""Synthetic mixtures and train/test experiments over the number of predictions.

Every generator and experiment is a pure function of its spec and seed.
Wall time is the only reported quantity that varies between runs.
"""
from __future__ import annotations

import math
import statistics
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .clustering import (
    Clustering,
    centers_of,
    dual_space,
    kmedian_sweep,
    permutation_space,
    weight_space,
)
from .loadbal import (
    LoadInstance,
    combine_with_doubling,
    fractional_makespan,
    fractional_opt_makespan,
    harmonic,
    proportional_assignment,
)
from .matching import MatchingInstance, hungarian_with_duals, k_predicted_primal_dual, make_feasible, zero_dual
from .sched import JobSet, SchedConfig, round_robin, run_multi_prediction_scheduler, sjf_opt

__all__ = [
    "MatchingCluster",
    "LoadCluster",
    "SchedCluster",
    "MixtureSpec",
    "Dataset",
    "ReportRow",
    "ExperimentReport",
    "TrainingRow",
    "default_spec",
    "gen_matching_mixture",
    "gen_loadbal_mixture",
    "gen_sched_mixture",
    "generate",
    "train_portfolios",
    "evaluate",
    "run_experiment",
]

PROBLEMS = ("matching", "loadbal", "sched")


@dataclass(frozen=True)
class MatchingCluster:
    """Left and right points live around ``center``; ``jitter`` moves them
    per instance. Costs are ``round(scale * l1 distance)``."""

    center: tuple[float, ...] = (0.0, 0.0)
    spread: float = 1.0
    scale: float = 10.0
    jitter: float = 0.01


@dataclass(frozen=True)
class LoadCluster:
    """``hot`` machines receive restricted jobs with probability ``hot_prob``;
    other neighborhoods are random subsets of density ``density``."""

    hot: tuple[int, ...] = (0,)
    hot_prob: float = 0.5
    density: float = 0.5
    size_low: float = 1.0
    size_high: float = 2.0


@dataclass(frozen=True)
class SchedCluster:
    """Sizes follow a fixed per-cluster profile times lognormal jitter.

    ``noise`` adjacent swaps are applied to the profile's SJF order to form
    the cluster's true-SJF prediction.
    """

    profile: str = "exponential"
    jitter: float = 0.0
    noise: int = 0


@dataclass(frozen=True)
class MixtureSpec:
    clusters: tuple = ()
    size: int = 40
    machines: int = 6
    train_per_cluster: int = 20
    test_per_cluster: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("need at least one cluster")
        if min(self.size, self.machines, self.train_per_cluster, self.test_per_cluster) < 1:
            raise ValueError("counts must be positive")
        for c in self.clusters:
            if any(v < 0 for v in (getattr(c, a, 0) for a in ("spread", "jitter", "noise"))):
                raise ValueError("spread, jitter and noise must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = type(self.clusters[0]).__name__
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        kinds = {"MatchingCluster": MatchingCluster, "LoadCluster": LoadCluster, "SchedCluster": SchedCluster}
        d = dict(d)
        kind = kinds[d.pop("kind")]
        clusters = tuple(kind(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.items()}) for c in d.pop("clusters"))
        return cls(clusters=clusters, **d)


def default_spec(problem: str, seed: int = 0) -> MixtureSpec:
    """Three well-separated clusters at desk scale."""
    if problem == "matching":
        clusters = (
            MatchingCluster(center=(0.0, 0.0), spread=1.0, scale=10.0),
            MatchingCluster(center=(5.0, 0.0), spread=3.0, scale=30.0),
            MatchingCluster(center=(0.0, 5.0), spread=2.0, scale=100.0),
        )
        return MixtureSpec(clusters, size=40, seed=seed)
    if problem == "loadbal":
        clusters = (
            LoadCluster(hot=(0, 1), hot_prob=0.6),
            LoadCluster(hot=(2, 3), hot_prob=0.6),
            LoadCluster(hot=(4, 5), hot_prob=0.6),
        )
        return MixtureSpec(clusters, size=60, machines=6, train_per_cluster=10, test_per_cluster=5, seed=seed)
    if problem == "sched":
        clusters = (
            SchedCluster("exponential", jitter=0.05),
            SchedCluster("uniform", jitter=0.05),
            SchedCluster("pareto", jitter=0.05),
        )
        return MixtureSpec(clusters, size=400, train_per_cluster=6, test_per_cluster=3, seed=seed)
    raise ValueError(f"unknown problem {problem!r}")


@dataclass
class Dataset:
    problem: str
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    train_labels: list = field(default_factory=list)
    test_labels: list = field(default_factory=list)
    predictions: list = field(default_factory=list)


def _rngs(spec: MixtureSpec):
    root = np.random.SeedSequence(spec.seed)
    return [np.random.default_rng(s) for s in root.spawn(len(spec.clusters))]


def _split(problem, spec, per_cluster_instances, predictions=()) -> Dataset:
    ds = Dataset(problem, predictions=list(predictions))
    for c, insts in enumerate(per_cluster_instances):
        ds.train += insts[: spec.train_per_cluster]
        ds.train_labels += [c] * spec.train_per_cluster
        ds.test += insts[spec.train_per_cluster :]
        ds.test_labels += [c] * spec.test_per_cluster
    return ds


def gen_matching_mixture(spec: MixtureSpec) -> Dataset:
    n = spec.size
    total = spec.train_per_cluster + spec.test_per_cluster
    out = []
    for params, rng in zip(spec.clusters, _rngs(spec)):
        center = np.asarray(params.center, dtype=float)
        anchors = center + params.spread * rng.standard_normal((2 * n, len(center)))
        insts = []
        for _ in range(total):
            pts = anchors + params.jitter * rng.standard_normal(anchors.shape)
            dist = np.abs(pts[:n, None, :] - pts[None, n:, :]).sum(axis=2)
            insts.append(MatchingInstance.from_matrix(np.rint(params.scale * dist).astype(np.int64)))
        out.append(insts)
    return _split("matching", spec, out)


def gen_loadbal_mixture(spec: MixtureSpec) -> Dataset:
    m, n = spec.machines, spec.size
    total = spec.train_per_cluster + spec.test_per_cluster
    out = []
    for params, rng in zip(spec.clusters, _rngs(spec)):
        if any(not 0 <= h < m for h in params.hot):
            raise ValueError("hot machines must be valid indices")
        insts = []
        for _ in range(total):
            nbhd = []
            for _ in range(n):
                if rng.random() < params.hot_prob:
                    nbhd.append(list(params.hot))
                else:
                    mask = rng.random(m) < params.density
                    if not mask.any():
                        mask[rng.integers(m)] = True
                    nbhd.append(np.flatnonzero(mask).tolist())
            sizes = rng.uniform(params.size_low, params.size_high, n).tolist()
            insts.append(LoadInstance.restricted(m, sizes, nbhd))
        out.append(insts)
    return _split("loadbal", spec, out)


def _profile(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "exponential":
        base = rng.exponential(size=n)
    elif kind == "uniform":
        base = rng.uniform(0.5, 1.5, n)
    elif kind == "pareto":
        base = rng.pareto(2.5, n) + 0.2
    else:
        raise ValueError(f"unknown size profile {kind!r}")
    return base + 1e-3


def adjacent_swaps(order, swaps: int, rng: np.random.Generator) -> tuple[int, ...]:
    o = list(order)
    if len(o) < 2:
        return tuple(o)
    for i in rng.integers(0, len(o) - 1, size=swaps):
        o[i], o[i + 1] = o[i + 1], o[i]
    return tuple(int(j) for j in o)


def gen_sched_mixture(spec: MixtureSpec) -> Dataset:
    """Instances plus one prediction per cluster: the profile's SJF order
    perturbed by ``noise`` adjacent swaps."""
    n = spec.size
    total = spec.train_per_cluster + spec.test_per_cluster
    out, preds = [], []
    for params, rng in zip(spec.clusters, _rngs(spec)):
        profile = _profile(params.profile, n, rng)
        preds.append(adjacent_swaps(sjf_opt(JobSet(tuple(profile)))[0], params.noise, rng))
        insts = []
        for _ in range(total):
            sizes = profile * np.exp(params.jitter * rng.standard_normal(n))
            insts.append(JobSet(tuple(sizes)))
        out.append(insts)
    return _split("sched", spec, out, preds)


def generate(problem: str, spec: MixtureSpec) -> Dataset:
    gens = {"matching": gen_matching_mixture, "loadbal": gen_loadbal_mixture, "sched": gen_sched_mixture}
    if problem not in gens:
        raise ValueError(f"unknown problem {problem!r}")
    return gens[problem](spec)


@dataclass(frozen=True)
class TrainingRow:
    k: int
    objective: float
    iterations: int
    cluster_sizes: tuple[int, ...]
    excluded: tuple[int, ...] = ()


def train_portfolios(
    problem: str, train: Sequence, k_range: Sequence[int], eps: float = 0.1
) -> tuple[dict[int, list], list[TrainingRow]]:
    """ERM portfolios for every k, warm-started so the objective never rises."""
    excluded: tuple[int, ...] = ()
    if problem == "matching":
        space = dual_space(train)
    elif problem == "loadbal":
        space, excluded = weight_space(train, eps)
    elif problem == "sched":
        space = permutation_space(train)
    else:
        raise ValueError(f"unknown problem {problem!r}")
    ks = sorted(k for k in k_range if k <= space.n_candidates)
    if len(ks) != len(set(k_range)):
        raise ValueError(f"k must not exceed the {space.n_candidates} usable training samples")
    sols: dict[int, Clustering] = kmedian_sweep(space, ks)
    portfolios = {k: centers_of(space, sols[k], eps if problem == "loadbal" else None) for k in ks}
    rows = [TrainingRow(k, sols[k].objective, sols[k].iterations, sols[k].cluster_sizes(), excluded) for k in ks]
    return portfolios, rows


@dataclass(frozen=True)
class ReportRow:
    cluster: int
    k: int
    mean_iterations: float = math.nan
    mean_time: float = math.nan
    baseline_iterations: float = math.nan
    baseline_time: float = math.nan
    mean_makespan_ratio: float = math.nan
    mean_bound_ratio: float = math.nan
    mean_completion_ratio: float = math.nan
    mean_rr_ratio: float = math.nan
    chosen: str = ""


@dataclass
class ExperimentReport:
    problem: str
    rows: list[ReportRow] = field(default_factory=list)
    training: list[TrainingRow] = field(default_factory=list)

    def row(self, cluster: int, k: int) -> ReportRow:
        return next(r for r in self.rows if r.cluster == cluster and r.k == k)

    def mean_over_clusters(self, k: int, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.rows if r.k == k]))


def _median_time(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def _histogram(chosen) -> str:
    counts = Counter(chosen)
    return ";".join(f"{c}:{counts[c]}" for c in sorted(counts))


def evaluate_matching(inst, portfolio, repeats=3):
    (m, stats), t = _median_time(lambda: k_predicted_primal_dual(inst, portfolio), repeats)
    return {"iterations": stats.iterations, "time": t, "chosen": stats.chosen_index, "total_cost": m.total_cost}


def evaluate_matching_baseline(inst, repeats=3):
    y0 = make_feasible(inst, zero_dual(inst.n))
    (_, stats), t = _median_time(lambda: hungarian_with_duals(inst, y0), repeats)
    return {"iterations": stats.iterations, "time": t}


def evaluate_loadbal(inst, portfolio):
    streams = [proportional_assignment(w, inst) for w in portfolio]
    per_stream = [fractional_makespan(x, inst) for x in streams]
    beta = min(per_stream)
    res = combine_with_doubling(inst, streams)
    opt = fractional_opt_makespan(inst)
    return {
        "beta": beta,
        "doublings": res.doublings,
        "makespan": res.makespan,
        "bound": 2 * harmonic(len(portfolio)) * beta,
        "opt": opt,
        "chosen": int(np.argmin(per_stream)),
    }


def evaluate_sched(J, portfolio, cfg: SchedConfig):
    res, trace = run_multi_prediction_scheduler(J, portfolio, cfg)
    opt = sjf_opt(J)[1]
    rr = round_robin(J).total
    followed = [int(r.action.split("-")[1]) for r in trace.rounds if r.action.startswith("follow-")]
    chosen = Counter(followed).most_common(1)[0][0] if followed else -1
    return {"total": res.total, "opt": opt, "rr_total": rr, "ratio": res.total / opt, "chosen": chosen, "trace": trace}


def evaluate(
    ds: Dataset,
    k_range: Sequence[int],
    *,
    eps: float = 0.1,
    sched_cfg: SchedConfig | None = None,
    repeats: int = 3,
) -> ExperimentReport:
    """Train on ``ds.train`` for each k and score on ``ds.test``."""
    portfolios, training = train_portfolios(ds.problem, ds.train, k_range, eps)
    report = ExperimentReport(ds.problem, training=training)
    clusters = sorted(set(ds.test_labels))
    by_cluster = {c: [inst for inst, lab in zip(ds.test, ds.test_labels) if lab == c] for c in clusters}

    baseline = {}
    if ds.problem == "matching":
        for c in clusters:
            runs = [evaluate_matching_baseline(i, repeats) for i in by_cluster[c]]
            baseline[c] = (np.mean([r["iterations"] for r in runs]), np.mean([r["time"] for r in runs]))

    for k in sorted(portfolios):
        portfolio = portfolios[k]
        for c in clusters:
            insts = by_cluster[c]
            if ds.problem == "matching":
                runs = [evaluate_matching(i, portfolio, repeats) for i in insts]
                row = ReportRow(
                    c,
                    k,
                    mean_iterations=float(np.mean([r["iterations"] for r in runs])),
                    mean_time=float(np.mean([r["time"] for r in runs])),
                    baseline_iterations=float(baseline[c][0]),
                    baseline_time=float(baseline[c][1]),
                    chosen=_histogram(r["chosen"] for r in runs),
                )
            elif ds.problem == "loadbal":
                runs = [evaluate_loadbal(i, portfolio) for i in insts]
                row = ReportRow(
                    c,
                    k,
                    mean_makespan_ratio=float(np.mean([r["makespan"] / r["opt"] for r in runs])),
                    mean_bound_ratio=float(np.mean([r["makespan"] / r["bound"] for r in runs])),
                    chosen=_histogram(r["chosen"] for r in runs),
                )
            else:
                cfg = sched_cfg or SchedConfig()
                runs = [evaluate_sched(J, portfolio, replace(cfg, seed=cfg.seed + t)) for t, J in enumerate(insts)]
                row = ReportRow(
                    c,
                    k,
                    mean_completion_ratio=float(np.mean([r["ratio"] for r in runs])),
                    mean_rr_ratio=float(np.mean([r["rr_total"] / r["opt"] for r in runs])),
                    chosen=_histogram(r["chosen"] for r in runs),
                )
            report.rows.append(row)
    return report


def run_experiment(problem: str, spec: MixtureSpec, k_range: Sequence[int], **kwargs) -> ExperimentReport:
    return evaluate(generate(problem, spec), k_range, **kwargs)
