"""Evaluation metrics for comparing aggregation methods across tasks.

Conventions: a metric table row is a method, a column is a task; each task
carries a flag for whether larger values are better. The relative-drop
metric and mean rank follow the usual multi-task reporting style; the
front-spread diagnostic summarizes how widely a set of final loss points
covers the trade-off front.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "MetricTable",
    "delta_m",
    "mean_rank",
    "dominates",
    "front_spread",
]


@dataclass(frozen=True)
class MetricTable:
    """Method-by-task metric values plus a single-task reference row.

    ``tasks`` holds (name, higher_is_better) pairs; ``values`` has one row
    per method in ``methods`` order; ``baseline`` is the reference value
    per task.
    """

    methods: List[str]
    tasks: List[Tuple[str, bool]]
    values: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        base = np.asarray(self.baseline, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "baseline", base)
        if vals.shape != (len(self.methods), len(self.tasks)):
            raise ShapeError(
                f"values shape {vals.shape} does not match "
                f"{len(self.methods)} methods x {len(self.tasks)} tasks"
            )
        if base.shape != (len(self.tasks),):
            raise ShapeError(f"baseline shape {base.shape} != ({len(self.tasks)},)")
        if np.any(np.isnan(vals)) or np.any(np.isnan(base)):
            raise ContractError("metric table contains NaN")

    def row(self, method):
        try:
            i = self.methods.index(method)
        except ValueError:
            raise ContractError(f"unknown method: {method!r}") from None
        return self.values[i]


def delta_m(table, method):
    """Mean signed per-task change of ``method`` relative to the baseline,
    in percent. Positive means worse than the baseline on average.

    For a higher-is-better task the sign is flipped so that degradation
    always counts as positive.
    """
    row = table.row(method)
    terms = []
    for k, (task_name, higher_better) in enumerate(table.tasks):
        b = table.baseline[k]
        if b == 0.0:
            raise ContractError(f"baseline value for task {task_name!r} is zero")
        sign = -1.0 if higher_better else 1.0
        terms.append(sign * (row[k] - b) / b)
    return 100.0 * float(np.mean(terms))


def _average_ranks(column, higher_better):
    """Competition ranks (1 = best) with ties averaged."""
    v = -column if higher_better else column
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mean_rank(table):
    """Per-method rank averaged over tasks (1.0 = best in every task)."""
    if len(table.methods) < 2:
        raise ContractError("mean_rank needs at least two methods")
    rank_sum = np.zeros(len(table.methods))
    for k, (_, higher_better) in enumerate(table.tasks):
        rank_sum += _average_ranks(table.values[:, k], higher_better)
    means = rank_sum / len(table.tasks)
    return {m: float(means[i]) for i, m in enumerate(table.methods)}


def dominates(a, b):
    """True iff loss vector ``a`` Pareto-dominates ``b`` (minimization):
    no component worse, at least one strictly better."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def front_spread(final_losses: Sequence) -> float:
    """Maximum pairwise distance among the mutually non-dominated points.

    Returns 0.0 when fewer than two points survive the dominance filter.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in final_losses]
    if len(pts) < 2:
        raise ContractError("front_spread needs at least two points")
    keep = [
        p
        for i, p in enumerate(pts)
        if not any(i != j and dominates(q, p) for j, q in enumerate(pts))
    ]
    if len(keep) < 2:
        return 0.0
    best = 0.0
    for i in range(len(keep)):
        for j in range(i + 1, len(keep)):
            d = float(np.linalg.norm(keep[i] - keep[j]))
            if d > best:
                best = d
    return best
