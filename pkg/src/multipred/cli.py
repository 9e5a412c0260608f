"""Command line: gen, train, run, report (and experiment = gen + report)."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .io import (
    dataclass_columns,
    instance_from_json,
    instance_to_json,
    portfolio_from_json,
    portfolio_to_json,
    read_json,
    write_csv,
    write_json,
)
from .sched import SchedConfig

STATS_COLUMNS = ["instance_id", "k", "chosen_index", "iterations", "total_cost"]
RUN_COLUMNS = ["instance_id", "k", "beta", "doublings", "makespan", "bound_2Hk_beta"]
RESULT_COLUMNS = ["instance_id", "k", "eps", "mode", "total", "opt", "rr_total", "ratio"]
TRACE_COLUMNS = ["round", "n_r", "q_tilde", "y_tilde", "action", "T_r", "completed"]
TRAINING_COLUMNS = ["k", "objective", "iterations", "cluster_sizes", "excluded"]


def _default_eps(problem: str, eps: float | None) -> float:
    if eps is not None:
        return eps
    return 0.2 if problem == "sched" else 0.1


def _sched_cfg(args) -> SchedConfig:
    return SchedConfig(
        eps=_default_eps("sched", args.eps),
        mode=args.mode,
        seed=args.seed,
        sample_size=args.sample_size,
        terminal_size=args.terminal_size,
    )


def _load_split(data: Path, split: str) -> tuple[list[str], list, list[int]]:
    files = sorted((data / split).glob("*.json"))
    if not files:
        raise SystemExit(f"no instances under {data / split}")
    ids = [f.stem for f in files]
    insts = [instance_from_json(read_json(f)) for f in files]
    labels = [int(i.split("_")[0][1:]) for i in ids]
    return ids, insts, labels


def _check_problem(data: Path, problem: str) -> None:
    meta = read_json(data / "mixture.json")
    if meta["problem"] != problem:
        raise SystemExit(f"{data} holds {meta['problem']} instances, not {problem}")


def cmd_gen(args) -> None:
    spec = bench.default_spec(args.problem, args.seed)
    overrides = {
        k: v
        for k, v in (("size", args.size), ("train_per_cluster", args.train), ("test_per_cluster", args.test))
        if v is not None
    }
    if overrides:
        spec = bench.MixtureSpec(**{**spec.__dict__, **overrides})
    ds = bench.generate(args.problem, spec)
    out = Path(args.out)
    write_json(out / "mixture.json", {"problem": args.problem, "spec": spec.to_dict()})
    for split, insts, labels in (("train", ds.train, ds.train_labels), ("test", ds.test, ds.test_labels)):
        counter: dict[int, int] = {}
        for inst, c in zip(insts, labels):
            idx = counter.get(c, 0)
            counter[c] = idx + 1
            write_json(out / split / f"c{c}_{idx:03d}.json", instance_to_json(inst))
    if ds.predictions:
        write_json(out / "predictions.json", portfolio_to_json(ds.predictions))
    print(f"wrote {len(ds.train)} train and {len(ds.test)} test instances to {out}")


def cmd_train(args) -> None:
    data = Path(args.data)
    _check_problem(data, args.problem)
    _, train, _ = _load_split(data, "train")
    eps = _default_eps(args.problem, args.eps)
    portfolios, rows = bench.train_portfolios(args.problem, train, range(1, args.k + 1), eps)
    out = Path(args.out)
    write_json(out / f"portfolio_k{args.k}.json", portfolio_to_json(portfolios[args.k]))
    write_csv(out / "training_report.csv", rows, TRAINING_COLUMNS)
    print(f"k={args.k} objective={rows[-1].objective:.6g}")


def cmd_run(args) -> None:
    data = Path(args.data)
    _check_problem(data, args.problem)
    ids, test, _ = _load_split(data, "test")
    portfolio = portfolio_from_json(read_json(args.portfolio))
    k = len(portfolio)
    out = Path(args.out)
    rows = []
    if args.problem == "matching":
        for iid, inst in zip(ids, test):
            r = bench.evaluate_matching(inst, portfolio, repeats=1)
            rows.append({"instance_id": iid, "k": k, "chosen_index": r["chosen"], "iterations": r["iterations"], "total_cost": r["total_cost"]})
        write_csv(out / "stats.csv", rows, STATS_COLUMNS)
    elif args.problem == "loadbal":
        for iid, inst in zip(ids, test):
            r = bench.evaluate_loadbal(inst, portfolio)
            rows.append({"instance_id": iid, "k": k, "beta": r["beta"], "doublings": r["doublings"], "makespan": r["makespan"], "bound_2Hk_beta": r["bound"]})
        write_csv(out / "run.csv", rows, RUN_COLUMNS)
    else:
        cfg = _sched_cfg(args)
        for t, (iid, J) in enumerate(zip(ids, test)):
            r = bench.evaluate_sched(J, portfolio, SchedConfig(**{**cfg.__dict__, "seed": cfg.seed + t}))
            rows.append({"instance_id": iid, "k": k, "eps": cfg.eps, "mode": cfg.mode, "total": r["total"], "opt": r["opt"], "rr_total": r["rr_total"], "ratio": r["ratio"]})
            write_csv(out / "traces" / f"{iid}.csv", r["trace"].rows(), TRACE_COLUMNS)
        write_csv(out / "result.csv", rows, RESULT_COLUMNS)
    print(f"ran {len(rows)} test instances with k={k}")


def _report(problem: str, ds: bench.Dataset, args, out: Path) -> None:
    kwargs = {"eps": _default_eps(problem, args.eps)}
    if problem == "sched":
        kwargs["sched_cfg"] = _sched_cfg(args)
    report = bench.evaluate(ds, range(1, args.k + 1), **kwargs)
    write_csv(out / "report.csv", report.rows, dataclass_columns(bench.ReportRow))
    write_csv(out / "training_report.csv", report.training, TRAINING_COLUMNS)
    for r in report.rows:
        print(
            f"cluster={r.cluster} k={r.k} iterations={r.mean_iterations:.2f} makespan_ratio={r.mean_makespan_ratio:.3f}"
            f" completion_ratio={r.mean_completion_ratio:.3f} chosen={r.chosen}"
        )


def cmd_report(args) -> None:
    data = Path(args.data)
    _check_problem(data, args.problem)
    _, train, train_labels = _load_split(data, "train")
    _, test, test_labels = _load_split(data, "test")
    ds = bench.Dataset(args.problem, train, test, train_labels, test_labels)
    _report(args.problem, ds, args, Path(args.out))


def cmd_experiment(args) -> None:
    ds = bench.generate(args.problem, bench.default_spec(args.problem, args.seed))
    _report(args.problem, ds, args, Path(args.out))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multipred", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--problem", choices=bench.PROBLEMS, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", required=True, help="directory written by gen")

    def sched_opts(p):
        p.add_argument("--eps", type=float, default=None)
        p.add_argument("--mode", choices=("basic", "improved"), default="improved")
        p.add_argument("--sample-size", type=int, default=None, help="override the scheduler's sample size")
        p.add_argument("--terminal-size", type=float, default=None, help="override the round-robin switch size")

    p = sub.add_parser("gen", help="write train/test instance JSONs")
    common(p, data=False)
    p.add_argument("--size", type=int, default=None, help="n (jobs or matching side)")
    p.add_argument("--train", type=int, default=None, help="train instances per cluster")
    p.add_argument("--test", type=int, default=None, help="test instances per cluster")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="learn a k-prediction portfolio")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="evaluate a portfolio on the test split")
    common(p)
    p.add_argument("--portfolio", required=True)
    p.add_argument("--k", type=int, default=None, help="ignored; k is the portfolio length")
    sched_opts(p)
    p.set_defaults(func=cmd_run)

    for name, func, data in (("report", cmd_report, True), ("experiment", cmd_experiment, False)):
        p = sub.add_parser(name, help="train and evaluate for k = 1..K" + ("" if data else " on a fresh mixture"))
        common(p, data=data)
        p.add_argument("--k", type=int, default=3)
        sched_opts(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
