"""Distributions of summary statistics across repeated experiments."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import AttributeTable, RepetitionSet
from .errors import ValidationError
from .metrics import DEFAULT_METRICS, BrowsingModel, MetricFrame, MetricSpec, evaluate
from .stats import BootstrapConfig, DistributionSummary, Ecdf, difference_bounds, percentile, summarize, weighted_mean
from .subgroups import partition

OVERALL = ""


def _statistic(values, weights, statistic) -> float:
    if statistic == "mean":
        return weighted_mean(values, weights)
    p = 50.0 if statistic == "median" else float(statistic)
    return percentile(values, p, weights)


def _check_statistic(statistic):
    if statistic in ("mean", "median"):
        return statistic
    try:
        p = float(statistic)
    except (TypeError, ValueError):
        raise ValidationError(f"unknown repetition statistic {statistic!r}") from None
    if not 0 <= p <= 100:
        raise ValidationError("percentile statistic must lie in [0, 100]")
    return p


@dataclass(frozen=True)
class RepetitionFrame:
    """Per-repetition statistic values keyed ``(rep, system, metric, group)``.

    ``group`` is ``""`` for the whole request population.
    """

    rep_ids: tuple[str, ...]
    systems: tuple[str, ...]
    metrics: tuple[str, ...]
    groups: tuple[str, ...]
    statistic: str | float
    values: dict[tuple[str, str, str, str], float]
    frames: dict[str, MetricFrame] = field(repr=False)
    attribute: str | None = None
    attributes: AttributeTable | None = field(default=None, repr=False)

    def series(self, system: str, metric: str, group: str = OVERALL) -> np.ndarray:
        try:
            return np.array([self.values[(r, system, metric, group)] for r in self.rep_ids])
        except KeyError as e:
            raise ValidationError(f"no repetition values for {e.args[0][1:]}") from None

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["repetition_id", "system_id", "metric_id", "group", "value"])
        for key in sorted(self.values):
            w.writerow([*key, repr(float(self.values[key]))])
        return out.getvalue()


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("DISTEVAL_THREADS", "1") or 1)
    return max(1, int(threads))


def evaluate_repetitions(repset: RepetitionSet, metrics: Sequence[MetricSpec | str] = DEFAULT_METRICS,
                         model: BrowsingModel = BrowsingModel(), statistic="mean",
                         attributes: AttributeTable | None = None, attribute: str | None = None,
                         threads: int | None = None) -> RepetitionFrame:
    """Evaluate every repetition and reduce each system/metric to ``statistic``."""
    statistic = _check_statistic(statistic)
    if attribute is not None and attributes is None:
        raise ValidationError("user attributes are required for grouping")
    systems = tuple(repset.system_ids)
    for rep in repset.repetitions:
        if tuple(sorted(rep.runs)) != systems:
            raise ValidationError(f"repetition {rep.rep_id!r} is missing a system")

    def one(rep):
        return evaluate(rep.runs, rep.truth, metrics, model)

    with ThreadPoolExecutor(max_workers=_threads(threads)) as pool:
        frames = list(pool.map(one, repset.repetitions))

    values = {}
    groups = {OVERALL}
    for rep, frame in zip(repset.repetitions, frames):
        parts = partition(frame.requests, attributes, attribute) if attribute else []
        for s in frame.systems:
            for m in frame.metrics:
                col = frame.column(s, m)
                values[(rep.rep_id, s, m, OVERALL)] = _statistic(col, None, statistic)
                for g in parts:
                    w = None if np.all(g.weights == 1.0) else g.weights
                    values[(rep.rep_id, s, m, g.label)] = _statistic(col[g.index], w, statistic)
                    groups.add(g.label)
    return RepetitionFrame(
        tuple(r.rep_id for r in repset.repetitions), systems, frames[0].metrics,
        tuple(sorted(groups)), statistic, values,
        {r.rep_id: f for r, f in zip(repset.repetitions, frames)}, attribute, attributes,
    )


def across_repetitions(repframe: RepetitionFrame, system: str, metric: str, group: str = OVERALL,
                       config: BootstrapConfig = BootstrapConfig()) -> DistributionSummary:
    """Summary of one system's per-repetition statistic."""
    x = np.sort(repframe.series(system, metric, group))
    return summarize(x, (10, 90), config, label=f"reps|{system}|{metric}|{group}", kde_bounds=None)


@dataclass(frozen=True)
class StabilityReport:
    system_a: str
    system_b: str
    metric: str
    group: str
    rep_ids: tuple[str, ...]
    differences: np.ndarray
    summary: DistributionSummary
    sign_consistency: float

    @property
    def ecdf(self) -> Ecdf:
        return self.summary.ecdf


def _rep_difference(repframe, rep_id, a, b, metric, group) -> float:
    if repframe.statistic != "mean":
        return (repframe.values[(rep_id, a, metric, group)]
                - repframe.values[(rep_id, b, metric, group)])
    frame = repframe.frames[rep_id]
    d = frame.column(a, metric) - frame.column(b, metric)
    if group == OVERALL:
        return float(np.mean(d))
    for g in partition(frame.requests, repframe.attributes, repframe.attribute):
        if g.label == group:
            w = None if np.all(g.weights == 1.0) else g.weights
            return weighted_mean(d[g.index], w)
    raise ValidationError(f"group {group!r} absent from repetition {rep_id!r}")


def stability_report(repframe: RepetitionFrame, system_a: str, system_b: str, metric: str,
                     group: str = OVERALL, config: BootstrapConfig = BootstrapConfig()) -> StabilityReport:
    """Distribution of the per-repetition ``A - B`` difference.

    With the mean statistic each difference is the mean paired per-request
    difference of that repetition.
    """
    if len(repframe.rep_ids) < 2:
        raise ValidationError("stability needs at least 2 repetitions")
    for s in (system_a, system_b):
        if s not in repframe.systems:
            raise ValidationError(f"unknown system {s!r}")
    diffs = np.array([_rep_difference(repframe, r, system_a, system_b, metric, group)
                      for r in repframe.rep_ids])
    ordered = np.sort(diffs)
    summary = summarize(ordered, (10, 90), config, label=f"stability|{system_a}|{system_b}|{metric}|{group}",
                        kde_bounds=difference_bounds(ordered))
    return StabilityReport(system_a, system_b, metric, group, repframe.rep_ids, diffs, summary,
                           float(np.count_nonzero(diffs > 0)) / diffs.size)
