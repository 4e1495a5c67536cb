"""Patience sweeps and prior-induced distributions of mean RBP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import AttributeTable, Run, TruthSet
from .errors import ValidationError
from .metrics import BrowsingModel, Hits, rbp_values, system_hits
from .stats import BootstrapConfig, DistributionSummary, Ecdf, derive_rng, summarize, weighted_mean
from .subgroups import Group, partition

DEGENERATE_TOL = 1e-12


def default_grid(step: float = 0.05) -> np.ndarray:
    if not 0 < step < 0.5:
        raise ValidationError(f"grid step must lie in (0, 0.5), got {step}")
    n = int(math.floor(1.0 / step + 1e-9))
    grid = np.round(np.arange(1, n + 1) * step, 12)
    return grid[(grid > 0) & (grid < 1)]


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64).ravel()
    if g.size == 0:
        raise ValidationError("empty patience grid")
    if np.any(g <= 0) or np.any(g >= 1):
        raise ValidationError("patience grid must lie in (0, 1)")
    if np.any(np.diff(g) <= 0):
        raise ValidationError("patience grid must be strictly increasing")
    return g


@dataclass(frozen=True)
class Crossover:
    system_a: str
    system_b: str
    lo: float
    hi: float

    def contains(self, gamma: float) -> bool:
        return self.lo <= gamma <= self.hi

    def as_dict(self):
        return {"system_a": self.system_a, "system_b": self.system_b, "interval": [self.lo, self.hi]}


@dataclass(frozen=True)
class SweepResult:
    grid: np.ndarray
    convention: str
    means: dict[str, np.ndarray]
    crossovers: list[Crossover]
    attribute: str | None = None
    group_means: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)


def find_crossovers(grid, curves: Mapping[str, np.ndarray]) -> list[Crossover]:
    """Grid intervals where the sign of a pairwise mean difference flips."""
    out = []
    systems = sorted(curves)
    for i, a in enumerate(systems):
        for b in systems[i + 1:]:
            d = np.asarray(curves[a]) - np.asarray(curves[b])
            nz = np.flatnonzero(d != 0)
            for j, k in zip(nz[:-1], nz[1:]):
                if np.sign(d[j]) != np.sign(d[k]):
                    out.append(Crossover(a, b, float(grid[j]), float(grid[k])))
    return out


class _Prepared:
    # per-system hit structures and request groups, reused across patience values
    def __init__(self, runs, truth, depth, attributes, attribute):
        if not runs:
            raise ValidationError("empty run set")
        self.requests = tuple(truth.requests)
        known = set(self.requests)
        self.hits: dict[str, Hits] = {}
        for sid in sorted(runs):
            extra = set(runs[sid].requests) - known
            if extra:
                raise ValidationError(f"system {sid!r} answers requests absent from truth")
            self.hits[sid] = system_hits(runs[sid], truth, self.requests, depth)
        self.groups: list[Group] = []
        if attribute is not None:
            if attributes is None:
                raise ValidationError("user attributes are required for grouping")
            self.groups = partition(self.requests, attributes, attribute)

    def values(self, sid, model) -> np.ndarray:
        return rbp_values(self.hits[sid], model)

    def group_mean(self, values, g: Group) -> float:
        w = None if np.all(g.weights == 1.0) else g.weights
        return weighted_mean(values[g.index], w)


def sweep_patience(runs: Mapping[str, Run], truth: TruthSet, grid=None,
                   model: BrowsingModel = BrowsingModel(), attributes: AttributeTable | None = None,
                   attribute: str | None = None) -> SweepResult:
    """Mean RBP of every system at each patience value on ``grid``."""
    grid = _check_grid(default_grid() if grid is None else grid)
    prep = _Prepared(runs, truth, model.depth, attributes, attribute)
    means = {sid: np.empty(grid.size) for sid in prep.hits}
    gmeans = {(sid, g.label): np.empty(grid.size) for sid in prep.hits for g in prep.groups}
    for j, gamma in enumerate(grid):
        m = model.with_gamma(float(gamma))
        for sid in prep.hits:
            v = prep.values(sid, m)
            means[sid][j] = np.mean(v)
            for g in prep.groups:
                gmeans[(sid, g.label)][j] = prep.group_mean(v, g)
    return SweepResult(grid, model.convention, means, find_crossovers(grid, means), attribute, gmeans)


@dataclass(frozen=True)
class BetaPrior:
    a: float = 5.0
    b: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValidationError(f"Beta shapes must be positive, got ({self.a}, {self.b})")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def mode(self) -> float | None:
        if self.a > 1 and self.b > 1:
            return (self.a - 1) / (self.a + self.b - 2)
        return None


def beta_pdf(prior: BetaPrior, x: float) -> float:
    if not 0.0 < x < 1.0:
        raise ValidationError(f"Beta density is evaluated on (0, 1), got {x}")
    a, b = prior.a, prior.b
    log_norm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return math.exp((a - 1) * math.log(x) + (b - 1) * math.log1p(-x) - log_norm)


def sample_patience(prior: BetaPrior, n: int, seed: int) -> np.ndarray:
    draws = derive_rng(seed, "posterior", "patience").beta(prior.a, prior.b, size=n)
    # the browsing model needs the open interval
    return np.clip(draws, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class PosteriorResult:
    prior: BetaPrior
    gammas: np.ndarray
    samples: dict[str, np.ndarray]
    summaries: dict[str, DistributionSummary]
    degenerate: dict[str, bool]
    attribute: str | None = None
    group_samples: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def ecdf(self, system: str) -> Ecdf:
        return self.summaries[system].ecdf


def posterior_metric(runs: Mapping[str, Run], truth: TruthSet, prior: BetaPrior = BetaPrior(),
                     n_samples: int = 1000, seed: int = 0, model: BrowsingModel = BrowsingModel(),
                     attributes: AttributeTable | None = None, attribute: str | None = None,
                     config: BootstrapConfig | None = None) -> PosteriorResult:
    """Push the patience prior through mean RBP.

    One shared list of patience draws is used for every system, so systems
    are compared at the same parameter values.
    """
    if n_samples < 100:
        raise ValidationError(f"posterior needs at least 100 samples, got {n_samples}")
    prep = _Prepared(runs, truth, model.depth, attributes, attribute)
    gammas = sample_patience(prior, n_samples, seed)
    samples = {sid: np.empty(n_samples) for sid in prep.hits}
    gsamples = {(sid, g.label): np.empty(n_samples) for sid in prep.hits for g in prep.groups}
    for j, gamma in enumerate(gammas):
        m = model.with_gamma(float(gamma))
        for sid in prep.hits:
            v = prep.values(sid, m)
            samples[sid][j] = np.mean(v)
            for g in prep.groups:
                gsamples[(sid, g.label)][j] = prep.group_mean(v, g)
    config = config or BootstrapConfig(seed=seed)
    summaries, degenerate = {}, {}
    for sid, s in samples.items():
        spread = float(s.max() - s.min())
        degenerate[sid] = spread <= DEGENERATE_TOL * max(1.0, float(np.abs(s).max()))
        summaries[sid] = summarize(s, (10, 90), config, label=f"posterior|{sid}")
    return PosteriorResult(prior, gammas, samples, summaries, degenerate, attribute, gsamples)
