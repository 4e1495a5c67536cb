"""Item-side expected exposure, ideal and prevalence targets, concentration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .data import AttributeTable, Catalog, Run, TruthSet
from .errors import ValidationError
from .metrics import BrowsingModel

KL_SMOOTHING = 1e-10


@dataclass(frozen=True)
class ExposureVector:
    labels: tuple[str, ...]
    masses: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        if len(self.labels) != self.masses.shape[0]:
            raise ValidationError("labels and masses differ in length")
        if np.any(self.masses < 0) or not np.all(np.isfinite(self.masses)):
            raise ValidationError("exposure masses must be finite and nonnegative")

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def normalize(self) -> "ExposureVector":
        total = self.total
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero exposure vector")
        return ExposureVector(self.labels, self.masses / total, True)

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.labels, self.masses)}

    def __getitem__(self, label: str) -> float:
        return float(self.masses[self.labels.index(label)])


def system_exposure(run: Run, model: BrowsingModel, catalog: Catalog) -> ExposureVector:
    """Raw exposure: each shown item collects its rank weight, summed over requests."""
    weights = model.rank_weights(model.depth)
    index, w = [], []
    for req in sorted(run.requests):
        items = run.requests[req][: model.depth]
        index.extend(catalog.index(it) for it in items)
        w.append(weights[: len(items)])
    idx = np.asarray(index, dtype=np.int64)
    wts = np.concatenate(w) if w else np.zeros(0)
    return ExposureVector(catalog.items, kernels.accumulate(idx, wts, len(catalog)))


def ideal_exposure(truth: TruthSet, model: BrowsingModel, catalog: Catalog):
    """Exposure of the policy that splits each request's top ``|R|`` weights evenly.

    Returns ``(vector, requests_without_relevant_items)``.
    """
    if not truth.is_binary():
        raise ValidationError("ideal exposure needs binary (0/1) gains")
    weights = model.rank_weights(model.depth)
    index, w, empty = [], [], []
    for req in truth.requests:
        rel = truth.relevant(req)
        if not rel:
            empty.append(req)
            continue
        share = float(np.sum(weights[: min(len(rel), model.depth)])) / len(rel)
        index.extend(catalog.index(it) for it in rel)
        w.extend([share] * len(rel))
    vec = ExposureVector(catalog.items, kernels.accumulate(
        np.asarray(index, dtype=np.int64), np.asarray(w, dtype=np.float64), len(catalog)))
    return vec, empty


def _check_same(p: ExposureVector, q: ExposureVector):
    if p.labels != q.labels:
        raise ValidationError("exposure vectors cover different catalogs")


def l2_distance(p: ExposureVector, q: ExposureVector) -> float:
    """Squared Euclidean distance between the normalized vectors."""
    _check_same(p, q)
    d = p.normalize().masses - q.normalize().masses
    return float(np.sum(d * d))


def kl_divergence(p: ExposureVector, q: ExposureVector) -> float:
    """``KL(p || q)`` in nats on normalized vectors.

    The target is smoothed by ``KL_SMOOTHING`` and renormalized only when it
    puts zero mass where ``p`` has some.
    """
    _check_same(p, q)
    pm = p.normalize().masses
    qm = q.normalize().masses
    if np.any((qm == 0) & (pm > 0)):
        qm = qm + KL_SMOOTHING
        qm = qm / qm.sum()
    nz = pm > 0
    return float(np.sum(pm[nz] * np.log(pm[nz] / qm[nz])))


def divergence(system: ExposureVector, target: ExposureVector, kind: str = "L2") -> float:
    k = kind.upper()
    if k == "L2":
        return l2_distance(system, target)
    if k == "KL":
        return kl_divergence(system, target)
    raise ValidationError(f"unknown divergence {kind!r}")


def lorenz_gini(exposure: ExposureVector) -> tuple[np.ndarray, float]:
    """Lorenz points ``(population share, mass share)`` and the Gini index."""
    x = np.sort(exposure.masses)
    n = x.size
    total = float(x.sum())
    if n == 0 or total <= 0:
        raise ValidationError("Gini needs positive total exposure")
    share = np.concatenate([[0.0], np.cumsum(x) / total])
    share[-1] = 1.0
    pop = np.arange(n + 1) / n
    # sum_i (2i - n - 1) x_(i) folded into symmetric pairs, exact for ties
    half = n // 2
    i = np.arange(1, half + 1)
    acc = float(np.sum((n + 1 - 2 * i) * (x[::-1][:half] - x[:half])))
    gini = acc / (n * total)
    return np.column_stack([pop, share]), min(max(gini, 0.0), 1.0)


def gini(exposure: ExposureVector) -> float:
    return lorenz_gini(exposure)[1]


def group_exposure(exposure: ExposureVector, item_attributes: AttributeTable, attribute: str) -> ExposureVector:
    """Per-group mass; an item with ``k`` values gives ``mass / k`` to each."""
    item_attributes.require(attribute)
    acc: dict[str, float] = {}
    for item, mass in zip(exposure.labels, exposure.masses):
        for label, w in item_attributes.weights(item, attribute).items():
            acc[label] = acc.get(label, 0.0) + float(mass) * w
    labels = tuple(sorted(acc))
    return ExposureVector(labels, np.array([acc[k] for k in labels]), exposure.normalized)


def prevalence_target(item_attributes: AttributeTable, attribute: str, catalog: Catalog) -> ExposureVector:
    """Normalized fractional count of catalog items per group."""
    if len(catalog) == 0:
        raise ValidationError("empty catalog")
    ones = ExposureVector(catalog.items, np.ones(len(catalog)))
    return group_exposure(ones, item_attributes, attribute).normalize()


@dataclass(frozen=True)
class SystemExposure:
    system: str
    raw: ExposureVector
    lorenz: np.ndarray
    gini: float
    l2_ideal: float
    kl_ideal: float
    groups: ExposureVector | None = None
    group_l2: Mapping[str, float] = field(default_factory=dict)
    group_kl: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ExposureAnalysis:
    model: BrowsingModel
    catalog_size: int
    ideal: ExposureVector
    ideal_gini: float
    empty_requests: tuple[str, ...]
    systems: dict[str, SystemExposure]
    attribute: str | None = None
    prevalence: ExposureVector | None = None
    ideal_groups: ExposureVector | None = None


def analyze_exposure(runs: Mapping[str, Run], truth: TruthSet, model: BrowsingModel, catalog: Catalog,
                     item_attributes: AttributeTable | None = None,
                     attribute: str | None = None) -> ExposureAnalysis:
    ideal, empty = ideal_exposure(truth, model, catalog)
    prevalence = ideal_groups = None
    if attribute is not None:
        if item_attributes is None:
            raise ValidationError("item attributes are required for group exposure")
        prevalence = prevalence_target(item_attributes, attribute, catalog)
        ideal_groups = group_exposure(ideal, item_attributes, attribute)
    out = {}
    for sid in sorted(runs):
        raw = system_exposure(runs[sid], model, catalog)
        lorenz, g = lorenz_gini(raw)
        groups, gl2, gkl = None, {}, {}
        if attribute is not None:
            groups = group_exposure(raw, item_attributes, attribute)
            for name, target in (("prevalence", prevalence), ("ideal", ideal_groups)):
                gl2[name] = l2_distance(groups, target)
                gkl[name] = kl_divergence(groups, target)
        out[sid] = SystemExposure(sid, raw, lorenz, g, l2_distance(raw, ideal),
                                  kl_divergence(raw, ideal), groups, gl2, gkl)
    return ExposureAnalysis(model, len(catalog), ideal, gini(ideal), tuple(empty), out,
                            attribute, prevalence, ideal_groups)
