"""Per-request effectiveness metrics and the metric frame."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .data import Run, TruthSet
from .errors import ValidationError

CONVENTIONS = ("shifted", "classic")


@dataclass(frozen=True)
class BrowsingModel:
    """Geometric patience model shared by RBP and exposure.

    ``shifted`` weights rank ``i`` by ``(1 - gamma) * gamma**i``; ``classic``
    uses ``gamma**(i - 1)``.  Lists are truncated at ``depth``.
    """

    gamma: float = 0.8
    convention: str = "shifted"
    depth: int = 1000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"patience must lie in (0, 1), got {self.gamma}")
        if self.convention not in CONVENTIONS:
            raise ValidationError(f"unknown convention {self.convention!r}")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValidationError(f"depth must be a positive integer, got {self.depth}")

    def with_gamma(self, gamma: float) -> "BrowsingModel":
        return BrowsingModel(gamma, self.convention, self.depth)

    @property
    def scale(self) -> float:
        # shifted-convention values are computed as gamma * classic so the
        # ratio between conventions is exact in floating point
        return self.gamma if self.convention == "shifted" else 1.0

    def rank_weights(self, n: int) -> np.ndarray:
        """Weights for ranks ``1..min(n, depth)``."""
        m = min(int(n), self.depth)
        classic = (1.0 - self.gamma) * np.power(self.gamma, np.arange(m, dtype=np.float64))
        return self.scale * classic if self.convention == "shifted" else classic


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    param: float | int | None = None

    @property
    def id(self) -> str:
        if self.kind == "rbp":
            return f"rbp({self.param:g})"
        if self.kind == "hr" and self.param is not None:
            return f"hr@{self.param}"
        return self.kind

    @classmethod
    def parse(cls, text: str, gamma: float = 0.8) -> "MetricSpec":
        t = text.strip().lower()
        if t == "rbp":
            return cls("rbp", float(gamma))
        m = re.fullmatch(r"rbp\(([0-9.eE+-]+)\)", t)
        if m:
            g = float(m.group(1))
            if not 0 < g < 1:
                raise ValidationError(f"rbp patience must lie in (0, 1): {text!r}")
            return cls("rbp", g)
        if t in ("ndcg", "mrr", "hr"):
            return cls(t)
        m = re.fullmatch(r"hr@(\d+)", t)
        if m:
            k = int(m.group(1))
            if k < 1:
                raise ValidationError(f"hit-rate cutoff must be >= 1: {text!r}")
            return cls("hr", k)
        raise ValidationError(f"unknown metric {text!r}")


DEFAULT_METRICS = ("rbp", "ndcg", "mrr", "hr", "hr@10", "hr@20")


def parse_metrics(names: Iterable[str] | str, gamma: float = 0.8) -> list[MetricSpec]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    specs = [MetricSpec.parse(n, gamma) for n in names]
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate metrics in {ids}")
    return specs


# ---------------------------------------------------------------------------
# hit structures


@dataclass(frozen=True)
class Hits:
    """CSR view of where relevant items land, one row per request."""

    indptr: np.ndarray
    ranks: np.ndarray
    gains: np.ndarray
    ideal_indptr: np.ndarray
    ideal_ranks: np.ndarray
    ideal_gains: np.ndarray


def build_hits(lists: Sequence[Sequence[str]], truths: Sequence[Mapping[str, float]], depth: int) -> Hits:
    indptr = [0]
    ranks, gains = [], []
    iptr = [0]
    iranks, igains = [], []
    for items, truth in zip(lists, truths):
        if truth:
            for r, item in enumerate(items[:depth], 1):
                g = truth.get(item, 0.0)
                if g > 0:
                    ranks.append(r)
                    gains.append(g)
            ideal = sorted((g for g in truth.values() if g > 0), reverse=True)[:depth]
            iranks.extend(range(1, len(ideal) + 1))
            igains.extend(ideal)
        indptr.append(len(ranks))
        iptr.append(len(iranks))
    return Hits(
        np.asarray(indptr, dtype=np.int64),
        np.asarray(ranks, dtype=np.int64),
        np.asarray(gains, dtype=np.float64),
        np.asarray(iptr, dtype=np.int64),
        np.asarray(iranks, dtype=np.int64),
        np.asarray(igains, dtype=np.float64),
    )


def _require_binary(hits: Hits):
    if np.any(hits.gains != 1.0) or np.any(hits.ideal_gains != 1.0):
        raise ValidationError("RBP needs binary (0/1) gains")


def rbp_values(hits: Hits, model: BrowsingModel) -> np.ndarray:
    _require_binary(hits)
    classic = kernels.rbp_rows(hits.indptr, hits.ranks, model.gamma)
    return model.scale * classic if model.convention == "shifted" else classic


def ndcg_values(hits: Hits) -> np.ndarray:
    dcg = kernels.dcg_rows(hits.indptr, hits.ranks, hits.gains)
    idcg = kernels.dcg_rows(hits.ideal_indptr, hits.ideal_ranks, hits.ideal_gains)
    out = np.zeros_like(dcg)
    ok = idcg > 0
    out[ok] = dcg[ok] / idcg[ok]
    return out


def first_ranks(hits: Hits) -> np.ndarray:
    return kernels.first_rank_rows(hits.indptr, hits.ranks)


def metric_values(spec: MetricSpec, hits: Hits, model: BrowsingModel) -> np.ndarray:
    if spec.kind == "rbp":
        return rbp_values(hits, model.with_gamma(spec.param))
    if spec.kind == "ndcg":
        return ndcg_values(hits)
    first = first_ranks(hits)
    if spec.kind == "mrr":
        out = np.zeros(len(first))
        ok = first > 0
        out[ok] = 1.0 / first[ok]
        return out
    if spec.kind == "hr":
        k = model.depth if spec.param is None else min(spec.param, model.depth)
        return ((first > 0) & (first <= k)).astype(np.float64)
    raise ValidationError(f"unknown metric kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# single-list entry points


def _single(items, truth, depth):
    return build_hits([tuple(items)], [dict(truth)], depth)


def rbp(items: Sequence[str], truth: Mapping[str, float], model: BrowsingModel = BrowsingModel()) -> float:
    """Rank-biased precision of one list against binary ``truth``."""
    return float(rbp_values(_single(items, truth, model.depth), model)[0])


def ndcg(items: Sequence[str], truth: Mapping[str, float], depth: int = 1000) -> float:
    return float(ndcg_values(_single(items, truth, depth))[0])


def mrr(items: Sequence[str], truth: Mapping[str, float], depth: int = 1000) -> float:
    return float(metric_values(MetricSpec("mrr"), _single(items, truth, depth), BrowsingModel(depth=depth))[0])


def hit_rate(items: Sequence[str], truth: Mapping[str, float], k: int) -> float:
    if k < 1:
        raise ValidationError("k must be >= 1")
    hits = _single(items, truth, k)
    return float(metric_values(MetricSpec("hr", k), hits, BrowsingModel(depth=k))[0])


# ---------------------------------------------------------------------------
# frame


@dataclass(frozen=True)
class MetricFrame:
    """Per-request metric values, ``values[system, metric, request]``."""

    systems: tuple[str, ...]
    metrics: tuple[str, ...]
    requests: tuple[str, ...]
    values: np.ndarray
    missing: Mapping[str, tuple[str, ...]]

    def column(self, system: str, metric: str) -> np.ndarray:
        try:
            s = self.systems.index(system)
        except ValueError:
            raise ValidationError(f"unknown system {system!r}") from None
        try:
            m = self.metrics.index(metric)
        except ValueError:
            raise ValidationError(f"unknown metric {metric!r}") from None
        return self.values[s, m]

    def mean(self, system: str, metric: str) -> float:
        return float(np.mean(self.column(system, metric)))

    def means(self) -> dict[str, dict[str, float]]:
        return {s: {m: self.mean(s, m) for m in self.metrics} for s in self.systems}

    def subset(self, requests: Sequence[str]) -> "MetricFrame":
        pos = {r: j for j, r in enumerate(self.requests)}
        idx = [pos[r] for r in requests]
        keep = set(requests)
        return MetricFrame(
            self.systems, self.metrics, tuple(requests), self.values[:, :, idx],
            {s: tuple(r for r in miss if r in keep) for s, miss in self.missing.items()},
        )

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["system_id", "metric_id", "request_id", "value"])
        for si, s in enumerate(self.systems):
            for mi, m in enumerate(self.metrics):
                for qi, q in enumerate(self.requests):
                    w.writerow([s, m, q, repr(float(self.values[si, mi, qi]))])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricFrame":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["system_id", "metric_id", "request_id", "value"]:
            raise ValidationError("not a metric-frame CSV")
        systems, metrics, requests = {}, {}, {}
        cells = {}
        for s, m, q, v in rows[1:]:
            systems.setdefault(s, None)
            metrics.setdefault(m, None)
            requests.setdefault(q, None)
            cells[(s, m, q)] = float(v)
        S, M, Q = tuple(systems), tuple(metrics), tuple(requests)
        values = np.empty((len(S), len(M), len(Q)))
        for si, s in enumerate(S):
            for mi, m in enumerate(M):
                for qi, q in enumerate(Q):
                    try:
                        values[si, mi, qi] = cells[(s, m, q)]
                    except KeyError:
                        raise ValidationError(f"metric-frame CSV missing cell {(s, m, q)}") from None
        return cls(S, M, Q, values, {s: () for s in S})


def _as_run_map(runs) -> dict[str, Run]:
    if isinstance(runs, Run):
        runs = [runs]
    if isinstance(runs, Mapping):
        out = dict(runs)
    else:
        out = {}
        for run in runs:
            if run.system_id in out:
                raise ValidationError(f"duplicate system {run.system_id!r}")
            out[run.system_id] = run
    if not out:
        raise ValidationError("empty run set")
    return out


def request_lists(run: Run, requests: Sequence[str]) -> list[tuple[str, ...]]:
    return [run.requests.get(q, ()) for q in requests]


def system_hits(run: Run, truth: TruthSet, requests: Sequence[str], depth: int) -> Hits:
    return build_hits(request_lists(run, requests), [truth.for_request(q) for q in requests], depth)


def evaluate(runs, truth: TruthSet, metrics: Sequence[MetricSpec | str] = DEFAULT_METRICS,
             model: BrowsingModel = BrowsingModel()) -> MetricFrame:
    """Score every system on every truth request.

    Requests a run does not answer score 0 and are listed in ``missing``.
    """
    run_map = _as_run_map(runs)
    specs = [m if isinstance(m, MetricSpec) else MetricSpec.parse(m, model.gamma) for m in metrics]
    if not specs:
        raise ValidationError("no metrics requested")
    requests = tuple(truth.requests)
    known = set(requests)
    systems = tuple(sorted(run_map))
    values = np.zeros((len(systems), len(specs), len(requests)))
    missing = {}
    for si, sid in enumerate(systems):
        run = run_map[sid]
        extra = sorted(set(run.requests) - known)
        if extra:
            raise ValidationError(f"system {sid!r} answers requests absent from truth: {extra[:5]}")
        missing[sid] = tuple(q for q in requests if q not in run.requests)
        hits = system_hits(run, truth, requests, model.depth)
        for mi, spec in enumerate(specs):
            values[si, mi] = metric_values(spec, hits, model)
    return MetricFrame(systems, tuple(s.id for s in specs), requests, values, missing)
