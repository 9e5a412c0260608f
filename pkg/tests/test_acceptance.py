"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import itertools
import math
import time

import numpy as np
import pytest

from multipred.bench import default_spec, run_experiment
from multipred.clustering import CostSpace, kmedian_local_search
from multipred.loadbal import (
    CombineFailure,
    LoadInstance,
    combine_run,
    fit_good_weights,
    fractional_makespan,
    fractional_opt_makespan,
    harmonic,
    log_weight_distance,
    proportional_assignment,
    WeightFitError,
)
from multipred.matching import (
    DualVector,
    MatchingInstance,
    dual_objective,
    k_predicted_primal_dual,
    l1_error,
    make_feasible,
    optimal_dual,
    select_best_dual,
)
from multipred.sched import (
    JobSet,
    SchedConfig,
    classify_sequences,
    estimate_percentile,
    inversion_error,
    preferential_time_share,
    round_robin,
    run_multi_prediction_scheduler,
    sequence_cost,
    sjf_opt,
)

from conftest import brute_force_matching_cost, brute_force_order_cost


@pytest.fixture
def verdict(capsys):
    lines = []

    def record(number, ok, detail):
        lines.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    yield record
    with capsys.disabled():
        for line in lines:
            print("\n" + line, end="")


def random_dual(rng, n, lo, hi):
    return DualVector(tuple(rng.integers(lo, hi, n).tolist()), tuple(rng.integers(lo, hi, n).tolist()))


def random_restricted(rng, m, n):
    sizes = rng.uniform(0.5, 5.0, n)
    nbhd = [sorted(rng.choice(m, int(rng.integers(1, m + 1)), replace=False).tolist()) for _ in range(n)]
    return LoadInstance.restricted(m, sizes, nbhd)


def random_stream(rng, inst):
    x = np.zeros((inst.n, inst.m))
    for j, N in enumerate(inst.nbhd):
        x[j, list(N)] = rng.dirichlet(np.full(len(N), 0.5))
    return x


def test_c01_matching_correctness(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    wrong = 0
    for _ in range(500):
        n = int(rng.integers(1, 8))
        inst = MatchingInstance.from_matrix(rng.integers(0, 30, (n, n)))
        k = int(rng.integers(1, 6))
        m, _ = k_predicted_primal_dual(inst, [random_dual(rng, n, -15, 30) for _ in range(k)])
        wrong += m.total_cost != brute_force_matching_cost(inst.cost)
    elapsed = time.perf_counter() - t0
    ok = verdict(1, wrong == 0 and elapsed < 10, f"{wrong} mismatches in 500, {elapsed:.2f}s")
    assert ok


def test_c02_selection_bound(verdict):
    rng = np.random.default_rng(2)
    violations = 0
    for _ in range(200):
        n = int(rng.integers(1, 31))
        inst = MatchingInstance.from_matrix(rng.integers(0, 50, (n, n)))
        ystar = optimal_dual(inst)
        repaired = [make_feasible(inst, random_dual(rng, n, -20, 50)) for _ in range(int(rng.integers(1, 6)))]
        chosen = repaired[select_best_dual(repaired)]
        gap = dual_objective(ystar) - dual_objective(chosen)
        violations += gap > min(l1_error(ystar, y) for y in repaired)
    ok = verdict(2, violations == 0, f"{violations} violations in 200")
    assert ok


def test_c03_iterations_fall_with_k(verdict):
    rep = run_experiment("matching", default_spec("matching", seed=0), [1, 2, 3], repeats=1)
    it = [rep.mean_over_clusters(k, "mean_iterations") for k in (1, 2, 3)]
    ok = it[0] >= it[1] >= it[2] and it[2] <= 0.9 * it[0]
    ok = verdict(3, ok, "mean iterations k=1,2,3: " + ", ".join(f"{v:.2f}" for v in it))
    assert ok


def test_c04_combiner_bounds(verdict):
    rng = np.random.default_rng(4)
    fails = bound_viol = share_viol = 0
    for _ in range(200):
        m, n, k = int(rng.integers(1, 11)), int(rng.integers(1, 201)), int(rng.integers(1, 9))
        inst = random_restricted(rng, m, n)
        streams = []
        for _ in range(k):
            if rng.random() < 0.5:
                streams.append(proportional_assignment(rng.lognormal(0, 1.5, m), inst))
            else:
                streams.append(random_stream(rng, inst))
        beta = min(fractional_makespan(x, inst) for x in streams)
        try:
            res = combine_run(inst, streams, beta)
        except CombineFailure:
            fails += 1
            continue
        bound_viol += res.makespan > 2 * harmonic(k) * beta + 1e-6
        st = res.state
        share_viol += any(
            np.any(st.contributions[l] > 2 * beta / (k - pos + 1) + 1e-6) for pos, l in enumerate(st.full_order(), 1)
        )
    ok = fails == bound_viol == share_viol == 0
    ok = verdict(4, ok, f"fails={fails} makespan>2H_k*beta={bound_viol} per-stream share bound={share_viol} over 200 runs")
    assert ok


def test_c05_metric(verdict):
    rng = np.random.default_rng(5)
    bad = 0
    for m in range(1, 17):
        count = 100_000 // 16 + (1 if m <= 100_000 % 16 else 0)
        a, b, c = (np.exp(rng.uniform(-5, 5, (count, m))) for _ in range(3))
        eta = lambda x, y: np.maximum(x / y, y / x).max(axis=1)  # noqa: E731
        bad += int(np.sum(eta(a, c) > eta(a, b) * eta(b, c) * (1 + 1e-12)))
    w = rng.uniform(0.1, 2, 5)
    identity = log_weight_distance(w, w.copy()) == 0 and log_weight_distance(w, w * [1, 1, 1, 1, 1 + 1e-9]) > 0
    ok = verdict(5, bad == 0 and identity, f"{bad} triangle violations in 100000 triples; identity={identity}")
    assert ok


def test_c06_weight_certificate(verdict):
    rng = np.random.default_rng(6)
    success = worst = 0
    for _ in range(100):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 41))
        inst = random_restricted(rng, m, n)
        opt = fractional_opt_makespan(inst)
        try:
            w = fit_good_weights(inst, 0.1)
        except WeightFitError:
            continue
        ratio = fractional_makespan(proportional_assignment(w, inst), inst) / opt
        worst = max(worst, ratio)
        success += ratio <= 1.1 + 1e-9
    ok = verdict(6, success >= 95, f"{success}/100 certified, worst ratio {worst:.4f}")
    assert ok


def test_c07_error_identity(verdict):
    rng = np.random.default_rng(7)
    mismatches = brute = 0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        sizes = rng.integers(1, 40, n).tolist()
        J = JobSet(sizes)
        sigma = rng.permutation(n)
        opt = sjf_opt(J)[1]
        mismatches += inversion_error(J, sigma) != sequence_cost(J, sigma) - opt
        if n <= 6:
            brute += opt != brute_force_order_cost(sizes)
    ok = verdict(7, mismatches == brute == 0, f"{mismatches} identity mismatches, {brute} brute-force mismatches")
    assert ok


def test_c08_round_robin_backstop(verdict):
    rng = np.random.default_rng(8)
    viol = 0
    for _ in range(300):
        n = int(rng.integers(1, 500))
        J = JobSet(tuple(rng.choice([rng.exponential(size=n), rng.pareto(1.5, n) + 0.01, rng.uniform(1, 2, n)])))
        viol += round_robin(J).total > 2 * sjf_opt(J)[1]
    pair = round_robin(JobSet((1, 1))).total, sjf_opt(JobSet((1, 1)))[1]
    ok = verdict(8, viol == 0 and pair == (4, 3), f"{viol} violations in 300; (1,1): RR {pair[0]} vs OPT {pair[1]}")
    assert ok


def decompositions_hold(J, res, trace):
    p, C = J.array(), np.asarray(res.completion)
    parts = trace.partition()
    later, cost, opt = J.n, 0.0, 0.0
    for r, (rec, part) in enumerate(zip(trace.rounds, parts)):
        part = list(part)
        later -= len(part)
        cost += (C[part] - rec.start).sum() + rec.T_r * later
        rest = [j for q in parts[r + 1 :] for j in q]
        if part:
            opt += sjf_opt(JobSet(p[part]))[1] + np.minimum(p[part][:, None], p[rest][None, :]).sum()
    return cost == pytest.approx(res.total, rel=1e-12) and opt == pytest.approx(sjf_opt(J)[1], rel=1e-12)


def progress_holds(trace, eps):
    return all(len(r.completed) >= (eps - 4 * eps**2) * r.n_r for r in trace.rounds[:-1] if not r.failure)


def test_c09_scheduler_envelope(verdict):
    n, eps = 2000, 0.2
    ratios, invariants = [], True
    for seed in range(20):
        rng = np.random.default_rng(900 + seed)
        J = JobSet(tuple(rng.exponential(size=n) + 0.01))
        order, opt = sjf_opt(J)
        portfolio = [list(rng.permutation(n)) for _ in range(3)]
        portfolio.insert(int(rng.integers(0, 4)), order)
        res, trace = run_multi_prediction_scheduler(J, portfolio, SchedConfig(eps=eps, mode="improved", seed=seed))
        ratios.append(res.total / opt)
        invariants &= decompositions_hold(J, res, trace) and progress_holds(trace, eps)
    mean = float(np.mean(ratios))
    rounds = SchedConfig(eps=eps).terminal_threshold(n, 4)
    ok = verdict(
        9, mean <= 1.35 and invariants, f"mean ratio {mean:.4f} (threshold 1.35); invariants={invariants}; RR switch at {rounds:.0f} > n={n}"
    )
    assert ok


def test_c10_step_statistics(verdict):
    n, eps = 10_000, 0.2
    cfg = SchedConfig(eps=eps)
    window = labels = 0
    y = int(eps * n)
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        p = rng.random(n) + 1e-9
        rank = int((p <= estimate_percentile(p, cfg, rng).q_tilde).sum())
        window += eps * (1 - eps) * n <= rank <= eps * (1 + eps) * n
        # prefixes of length eps*n: eps^2*n big jobs (good side) vs 4*eps^2*n (bad side)
        sizes = np.ones(n)
        good_prefix = np.arange(y)
        bad_prefix = np.arange(y, 2 * y)
        sizes[rng.choice(good_prefix, int(eps**2 * n), replace=False)] = 5.0
        sizes[rng.choice(bad_prefix, int(4 * eps**2 * n), replace=False)] = 5.0
        got, _ = classify_sequences(sizes, [good_prefix, bad_prefix], 1.0, n, cfg, rng)
        labels += got == [True, False]
    ok = verdict(10, window >= 180 and labels >= 180, f"rank window {window}/200, labels {labels}/200")
    assert ok


def exhaustive(cost, k, cols):
    return min(cost[:, list(c)].min(axis=1).sum() for c in itertools.combinations(cols, k))


def test_c11_kmedian_quality(verdict):
    rng = np.random.default_rng(11)
    worst_ls = worst_restrict = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 11))
        k = int(rng.integers(1, min(3, n) + 1))
        pts = rng.random((n, 2)) * 10
        space = CostSpace(np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2))
        best = exhaustive(space.cost, k, range(n))
        got = kmedian_local_search(space, k).objective
        worst_ls = max(worst_ls, got / best if best > 0 else (0.0 if got == 0 else math.inf))
    for _ in range(150):
        n, extra = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        k = int(rng.integers(1, min(3, n) + 1))
        pts = rng.random((n + extra, 2)) * 10
        full = np.abs(pts[:n, None, :] - pts[None, :, :]).sum(axis=2)
        best = exhaustive(full, k, range(n + extra))
        restricted = exhaustive(full, k, range(n))
        worst_restrict = max(worst_restrict, restricted / best if best > 0 else 1.0)
    ok = worst_ls <= 5 and worst_restrict <= 2
    ok = verdict(11, ok, f"worst local-search ratio {worst_ls:.3f}, worst restriction factor {worst_restrict:.3f}")
    assert ok


def test_c12_time_sharing_backstop(verdict):
    eps, worst = 0.2, 0.0
    for seed in range(20):
        rng = np.random.default_rng(1200 + seed)
        n = 2000 if seed % 2 else 800
        J = JobSet(tuple(rng.exponential(size=n) + 0.01))
        order, opt = sjf_opt(J)
        if seed % 4 < 2:
            portfolio = [order[::-1]] * 3
        else:
            portfolio = [list(rng.permutation(n)) for _ in range(3)] + [order]
        small = {} if n == 2000 else {"terminal_size": 50, "sample_size": 60}
        cfg = SchedConfig(eps=eps, seed=seed, **small)
        worst = max(worst, preferential_time_share(J, portfolio, cfg).total / opt)
    ok = verdict(12, worst <= 2 / eps, f"worst total/OPT {worst:.3f} (bound {2 / eps:.0f})")
    assert ok
