"""Disaggregation of metric distributions by user attributes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import AttributeTable
from .errors import ValidationError
from .metrics import MetricFrame
from .stats import (
    BootstrapConfig,
    DistributionSummary,
    PairedDiffSummary,
    bootstrap_distribution,
    paired_diff_values,
    percentile_interval,
    summarize,
    weighted_mean,
)


@dataclass(frozen=True)
class Group:
    label: str
    requests: tuple[str, ...]
    index: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.requests)

    @property
    def weight(self) -> float:
        return float(self.weights.sum())

    def stream(self, *parts: str) -> str:
        # bootstrap streams key on membership, so renaming a group keeps its draws
        h = hashlib.blake2b("\x1f".join(self.requests).encode("utf-8"), digest_size=12).hexdigest()
        return "|".join([*parts, h])


def partition(requests, attributes: AttributeTable, attribute: str) -> list[Group]:
    """Split requests by ``attribute`` with fractional weights ``1/k``.

    Requests without the attribute land in ``unknown``.
    """
    attributes.require(attribute)
    members: dict[str, list[tuple[int, str, float]]] = {}
    for j, req in enumerate(requests):
        for label, w in attributes.weights(req, attribute).items():
            members.setdefault(label, []).append((j, req, w))
    groups = []
    for label in sorted(members):
        rows = members[label]
        groups.append(Group(
            label,
            tuple(r for _, r, _ in rows),
            np.array([j for j, _, _ in rows], dtype=np.int64),
            np.array([w for _, _, w in rows], dtype=np.float64),
        ))
    return groups


@dataclass(frozen=True)
class Gap:
    group_a: str
    group_b: str
    diff: float
    lo: float
    hi: float

    def as_dict(self):
        return {"group_a": self.group_a, "group_b": self.group_b, "diff": self.diff, "ci": [self.lo, self.hi]}


@dataclass(frozen=True)
class GroupedSummary:
    attribute: str
    system: str
    metric: str
    groups: dict[str, DistributionSummary]
    sizes: dict[str, int]
    weights: dict[str, float]
    gaps: list[Gap]
    samples: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def mean(self, label: str) -> float:
        return self.groups[label].mean.value


def _mean_replicates(x, w, config, label) -> np.ndarray:
    if x.min() == x.max():
        return np.full(config.n_boot, float(x[0]))
    return bootstrap_distribution(x, ["mean"], config, w, label)[:, 0]


def _group_weights(g: Group):
    return None if np.all(g.weights == 1.0) else g.weights


def disaggregate(frame: MetricFrame, attributes: AttributeTable, attribute: str, metric: str,
                 system: str, config: BootstrapConfig = BootstrapConfig(),
                 percentiles=(10, 90)) -> GroupedSummary:
    """Per-group distribution summaries plus pairwise mean gaps.

    Gap CIs come from independent per-group bootstraps of the mean.
    """
    values = frame.column(system, metric)
    groups = partition(frame.requests, attributes, attribute)
    summaries, reps, samples = {}, {}, {}
    for g in groups:
        x = values[g.index]
        w = _group_weights(g)
        label = g.stream(system, metric)
        summaries[g.label] = summarize(x, percentiles, config, w, label=label)
        reps[g.label] = _mean_replicates(x, w, config, label)
        samples[g.label] = x
    gaps = []
    for a in groups:
        for b in groups:
            if a.label == b.label:
                continue
            diff = summaries[a.label].mean.value - summaries[b.label].mean.value
            lo, hi = percentile_interval(reps[a.label] - reps[b.label], config.level)
            if np.all(reps[a.label] == reps[a.label][0]) and np.all(reps[b.label] == reps[b.label][0]):
                lo = hi = diff
            gaps.append(Gap(a.label, b.label, diff, min(lo, diff), max(hi, diff)))
    return GroupedSummary(
        attribute, system, metric, summaries,
        {g.label: g.n for g in groups}, {g.label: g.weight for g in groups}, gaps, samples,
    )


def group_means(frame: MetricFrame, attributes: AttributeTable, attribute: str, metric: str,
                system: str) -> dict[str, float]:
    values = frame.column(system, metric)
    return {g.label: weighted_mean(values[g.index], _group_weights(g))
            for g in partition(frame.requests, attributes, attribute)}


@dataclass(frozen=True)
class GroupChange:
    attribute: str
    metric: str
    system_a: str
    system_b: str
    groups: dict[str, PairedDiffSummary]


def group_change(frame: MetricFrame, attributes: AttributeTable, attribute: str, metric: str,
                 system_a: str, system_b: str, config: BootstrapConfig | None = None) -> GroupChange:
    """Paired ``A - B`` differences within each group.

    A request with several attribute values takes part in each of its groups;
    groups of one request get a summary without a t-test.
    """
    if system_a == system_b:
        raise ValidationError("compare two different systems")
    a = frame.column(system_a, metric)
    b = frame.column(system_b, metric)
    out = {}
    for g in partition(frame.requests, attributes, attribute):
        out[g.label] = paired_diff_values(
            a[g.index], b[g.index], system_a, system_b, metric, config,
            label=g.stream("change", system_a, system_b, metric),
        )
    return GroupChange(attribute, metric, system_a, system_b, out)
