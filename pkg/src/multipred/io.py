"""JSON instances and portfolios, CSV reports.

Machine and job indices are 0-based in every file.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .loadbal import LoadInstance
from .matching import DualVector, MatchingInstance
from .sched import JobSet

__all__ = [
    "instance_to_json",
    "instance_from_json",
    "portfolio_to_json",
    "portfolio_from_json",
    "write_json",
    "read_json",
    "write_csv",
    "read_csv",
]


def _num(x):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def instance_to_json(inst) -> dict:
    if isinstance(inst, MatchingInstance):
        return {"n": inst.n, "cost": [list(row) for row in inst.cost]}
    if isinstance(inst, LoadInstance):
        jobs = []
        for j, N in enumerate(inst.nbhd):
            if inst.is_restricted:
                jobs.append({"p": float(inst.sizes[j]), "nbhd": [int(i) for i in N]})
            else:
                jobs.append({"p_by_machine": [float(inst.p[j, i]) for i in N], "nbhd": [int(i) for i in N]})
        return {"m": inst.m, "jobs": jobs}
    if isinstance(inst, JobSet):
        return {"sizes": list(inst.sizes)}
    raise TypeError(f"cannot serialize {type(inst).__name__}")


def instance_from_json(d: dict):
    if "cost" in d:
        inst = MatchingInstance.from_matrix(d["cost"])
        if d.get("n", inst.n) != inst.n:
            raise ValueError("n disagrees with the cost matrix")
        return inst
    if "jobs" in d:
        m = int(d["m"])
        nbhd = [list(job["nbhd"]) for job in d["jobs"]]
        if all("p" in job for job in d["jobs"]):
            return LoadInstance.restricted(m, [job["p"] for job in d["jobs"]], nbhd)
        p = np.full((len(nbhd), m), math.inf)
        for j, job in enumerate(d["jobs"]):
            vals = job["p_by_machine"] if "p_by_machine" in job else [job["p"]] * len(job["nbhd"])
            if len(vals) != len(job["nbhd"]):
                raise ValueError("p_by_machine must match nbhd")
            p[j, job["nbhd"]] = vals
        return LoadInstance(m, p, tuple(tuple(N) for N in nbhd))
    if "sizes" in d:
        return JobSet(tuple(d["sizes"]))
    raise ValueError("unrecognized instance JSON")


def portfolio_to_json(items: Sequence) -> dict:
    if not items:
        raise ValueError("empty portfolio")
    first = items[0]
    if isinstance(first, DualVector):
        return {
            "kind": "duals",
            "items": [{"left": [_num(v) for v in y.left], "right": [_num(v) for v in y.right]} for y in items],
        }
    if isinstance(first, np.ndarray) and first.dtype.kind == "f":
        return {"kind": "weights", "items": [[float(v) for v in w] for w in items]}
    return {"kind": "perms", "items": [[int(j) for j in sigma] for sigma in items]}


def portfolio_from_json(d: dict) -> list:
    kind = d.get("kind")
    if kind == "duals":
        return [DualVector(tuple(y["left"]), tuple(y["right"])) for y in d["items"]]
    if kind == "weights":
        return [np.asarray(w, dtype=float) for w in d["items"]]
    if kind == "perms":
        return [tuple(int(j) for j in sigma) for sigma in d["items"]]
    raise ValueError(f"unknown portfolio kind {kind!r}")


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v):
    if isinstance(v, (tuple, list)):
        return ";".join(str(_cell(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return _num(v)


def write_csv(path, rows: Iterable, columns: Sequence[str] | None = None) -> None:
    """Rows may be dicts or dataclass instances."""
    rows = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    if columns is None:
        columns = list(rows[0]) if rows else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({c: _cell(r.get(c, "")) for c in columns})


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def dataclass_columns(cls) -> list[str]:
    return [f.name for f in fields(cls)]
