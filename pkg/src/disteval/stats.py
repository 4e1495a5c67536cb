"""Distribution summaries: quantiles, ECDF, KDE, bootstrap CIs, paired tests."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ValidationError

Statistic = str | float | Callable[[np.ndarray], float]


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    """Independent generator for a labelled sub-stream of ``seed``."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
        words.append(int.from_bytes(digest, "little"))
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass(frozen=True)
class BootstrapConfig:
    n_boot: int = 1000
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if int(self.n_boot) != self.n_boot or self.n_boot < 100:
            raise ValidationError(f"bootstrap needs at least 100 resamples, got {self.n_boot}")
        if not 0.0 < self.level < 1.0:
            raise ValidationError(f"confidence level must lie in (0, 1), got {self.level}")

    def as_dict(self):
        return {"n_boot": self.n_boot, "level": self.level, "method": "percentile", "seed": self.seed}


def _as_samples(samples, minimum=1) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < minimum:
        if x.size == 0:
            raise ValidationError("empty sample")
        raise ValidationError(f"need at least {minimum} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    return x


def _as_weights(weights, n) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != (n,):
        raise ValidationError("weights must match samples")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValidationError("weights must be positive and finite")
    if np.all(w == w[0]):
        return None
    return w


def percentile(samples, p: float, weights=None) -> float:
    """Linear-interpolation percentile, ``p`` in percent.

    Unweighted: position ``h = (n - 1) * p / 100`` between order statistics.
    Weighted: each value acts as ``w / min(w)`` copies of itself.
    """
    return float(percentiles(samples, [p], weights)[0])


def percentiles(samples, ps: Sequence[float], weights=None) -> np.ndarray:
    x = _as_samples(samples)
    probs = _probs(ps)
    w = _as_weights(weights, x.size)
    if w is None:
        return kernels.quantiles(x, probs)
    return kernels.wquantiles(x, w, probs)


def _probs(ps) -> np.ndarray:
    probs = np.asarray([float(p) / 100.0 for p in ps], dtype=np.float64)
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValidationError("percentiles must lie in [0, 100]")
    return probs


def weighted_mean(x, w=None) -> float:
    if w is None:
        return float(np.mean(x))
    return float(np.sum(w * x) / np.sum(w))


# ---------------------------------------------------------------------------
# ECDF and KDE


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical CDF, ``F(x) = #{samples <= x} / n``."""

    sorted_samples: np.ndarray

    @classmethod
    def of(cls, samples) -> "Ecdf":
        return cls(np.sort(_as_samples(samples)))

    @property
    def n(self) -> int:
        return self.sorted_samples.size

    def __call__(self, x):
        counts = np.searchsorted(self.sorted_samples, x, side="right")
        return counts / self.n

    def points(self) -> list[tuple[float, float]]:
        xs, idx = np.unique(self.sorted_samples, return_index=True)
        counts = np.append(idx[1:], self.n)
        return [(float(a), float(c / self.n)) for a, c in zip(xs, counts)]

    def dominates(self, other: "Ecdf") -> bool:
        """True when this distribution lies weakly to the right of ``other``."""
        grid = np.union1d(self.sorted_samples, other.sorted_samples)
        return bool(np.all(self(grid) <= other(grid)))


def ecdf(samples) -> list[tuple[float, float]]:
    return Ecdf.of(samples).points()


@dataclass(frozen=True)
class KdeGrid:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False
    spike_at: float | None = None

    def points(self):
        return [(float(a), float(b)) for a, b in zip(self.x, self.density)]


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n**(-1/5)``; IQR is skipped when it is 0."""
    x = _as_samples(samples, 2)
    if x.min() == x.max():
        return 0.0  # np.std of a constant can be ~1e-17, not 0
    sd = float(np.std(x, ddof=1))
    q25, q75 = kernels.quantiles(x, np.array([0.25, 0.75]))
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde_grid(samples, grid_size: int = 50, bounds: tuple[float, float] = (0.0, 1.0)) -> KdeGrid:
    """Gaussian KDE evaluated on an even grid over ``bounds``.

    All-equal samples have zero bandwidth; that case comes back with
    ``degenerate=True``, a zero density array and ``spike_at`` set.
    """
    x = _as_samples(samples, 2)
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ValidationError(f"bad KDE bounds {bounds}")
    if grid_size < 2:
        raise ValidationError("KDE grid needs at least 2 points")
    grid = np.linspace(lo, hi, int(grid_size))
    bw = silverman_bandwidth(x)
    if bw == 0.0:
        return KdeGrid(grid, np.zeros_like(grid), 0.0, True, float(x[0]))
    return KdeGrid(grid, kernels.kde_eval(x, grid, bw), bw)


def difference_bounds(diffs) -> tuple[float, float]:
    m = float(np.max(np.abs(diffs)))
    if m == 0.0:
        m = 1.0
    return (-m, m)


# ---------------------------------------------------------------------------
# bootstrap


def _stat_probs(statistics: Sequence[Statistic]) -> tuple[np.ndarray, list[int]]:
    # maps each named statistic to a column of the kernel output
    probs, cols = [], []
    for s in statistics:
        if s == "mean":
            cols.append(0)
        elif s == "median":
            probs.append(0.5)
            cols.append(len(probs))
        elif isinstance(s, (int, float)) and not isinstance(s, bool):
            probs.append(float(s) / 100.0)
            cols.append(len(probs))
        else:
            raise ValidationError(f"unsupported statistic {s!r}")
    return np.asarray(probs, dtype=np.float64), cols


def resample_indices(n: int, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n, size=(n_boot, n))


def bootstrap_distribution(samples, statistics: Sequence[Statistic], config: BootstrapConfig,
                           weights=None, label: str = "") -> np.ndarray:
    """``(n_boot, len(statistics))`` replicate values from one index draw."""
    x = _as_samples(samples)
    w = _as_weights(weights, x.size)
    idx = resample_indices(x.size, config.n_boot, derive_rng(config.seed, "bootstrap", label))
    if any(callable(s) for s in statistics):
        cols = []
        for s in statistics:
            if callable(s):
                cols.append([float(s(x[row])) for row in idx])
            else:
                cols.append(bootstrap_distribution(x, [s], config, weights, label)[:, 0])
        return np.column_stack(cols)
    probs, cols = _stat_probs(statistics)
    if w is None:
        raw = kernels.bootstrap_stats(x, idx, probs)
    else:
        raw = kernels.bootstrap_stats_weighted(x, w, idx, probs)
    return raw[:, cols]


def percentile_interval(replicates, level: float) -> tuple[float, float]:
    lo, hi = kernels.quantiles(np.asarray(replicates, dtype=np.float64),
                               np.array([(1.0 - level) / 2.0, (1.0 + level) / 2.0]))
    return float(lo), float(hi)


def bootstrap_ci(samples, statistic: Statistic = "mean", n_boot: int = 1000, level: float = 0.95,
                 seed: int = 0, weights=None, label: str = "") -> tuple[float, float]:
    """Percentile-bootstrap interval for ``statistic``.

    ``statistic`` is ``"mean"``, ``"median"``, a percentile in percent, or a
    callable taking a resampled array.
    """
    config = BootstrapConfig(n_boot, level, seed)
    x = _as_samples(samples, 2)
    if x.min() == x.max():
        c = float(x[0])
        return (c, c)
    reps = bootstrap_distribution(x, [statistic], config, weights, label)[:, 0]
    return percentile_interval(reps, level)


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class Estimate:
    value: float
    lo: float
    hi: float

    def as_dict(self):
        return {"value": self.value, "ci": [self.lo, self.hi]}


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    weight: float
    mean: Estimate
    median: Estimate
    percentiles: dict[float, Estimate]
    level: float
    ecdf: Ecdf
    kde: KdeGrid | None = field(default=None, compare=False)

    def percentile(self, p: float) -> Estimate:
        return self.percentiles[float(p)]

    def iqr(self) -> float:
        q25, q75 = percentiles(self.ecdf.sorted_samples, [25, 75])
        return float(q75 - q25)

    def as_dict(self):
        out = {
            "n": self.n,
            "weight": self.weight,
            "ci_level": self.level,
            "mean": self.mean.as_dict(),
            "median": self.median.as_dict(),
            "percentiles": {_pkey(p): e.as_dict() for p, e in sorted(self.percentiles.items())},
        }
        if self.kde is not None:
            out["kde"] = {"bandwidth": self.kde.bandwidth, "degenerate": self.kde.degenerate,
                          "spike_at": self.kde.spike_at, "grid_size": int(self.kde.x.size)}
        return out


def _pkey(p: float) -> str:
    return f"{p:g}"


def _clamped(value, lo, hi) -> Estimate:
    return Estimate(float(value), float(min(lo, value)), float(max(hi, value)))


def summarize(samples, percentiles_: Sequence[float] = (10, 90), config: BootstrapConfig = BootstrapConfig(),
              weights=None, label: str = "", kde_bounds: tuple[float, float] | None = (0.0, 1.0),
              kde_size: int = 50) -> DistributionSummary:
    """Mean, median and percentiles, each with a percentile-bootstrap CI.

    All statistics share one resample draw.  Intervals are widened to cover
    their point estimate when the bootstrap quantiles miss it.
    """
    x = _as_samples(samples)
    w = _as_weights(weights, x.size)
    ps = sorted({float(p) for p in percentiles_})
    stats: list[Statistic] = ["mean", "median", *ps]
    total_w = float(x.size if weights is None else np.sum(np.asarray(weights, dtype=np.float64)))

    if x.min() == x.max():
        c = float(x[0])
        point = [c] * len(stats)
        ci = [(c, c)] * len(stats)
    else:
        probs = np.array([0.5, *[p / 100.0 for p in ps]])
        qs = kernels.quantiles(x, probs) if w is None else kernels.wquantiles(x, w, probs)
        point = [weighted_mean(x, w), *qs.tolist()]
        if x.size < 2:
            ci = [(v, v) for v in point]
        else:
            reps = bootstrap_distribution(x, stats, config, w, label)
            ci = [percentile_interval(reps[:, j], config.level) for j in range(len(stats))]
    ests = [_clamped(v, lo, hi) for v, (lo, hi) in zip(point, ci)]

    kde = None
    if kde_bounds is not None and x.size >= 2:
        kde = kde_grid(x, kde_size, kde_bounds)
    return DistributionSummary(
        n=int(x.size), weight=total_w, mean=ests[0], median=ests[1],
        percentiles={p: e for p, e in zip(ps, ests[2:])},
        level=config.level, ecdf=Ecdf.of(x), kde=kde,
    )


# ---------------------------------------------------------------------------
# t distribution


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10001):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTest:
    """Paired t-test outcome; ``degenerate`` names the reason ``p`` is absent."""

    t: float | None
    df: int
    p: float | None
    degenerate: str | None = None

    def as_dict(self):
        return {"t": self.t, "df": self.df, "p": self.p, "degenerate": self.degenerate}


def one_sample_t(diffs) -> TTest:
    d = _as_samples(diffs, 2)
    n = d.size
    if d.min() == d.max():
        return TTest(None, n - 1, None, "tie" if d[0] == 0.0 else "zero-variance")
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(mean / sd):  # subnormal spread underflows
        return TTest(None, n - 1, None, "zero-variance")
    t = mean / (sd / math.sqrt(n))
    return TTest(t, n - 1, t_sf_two_sided(t, n - 1))


@dataclass(frozen=True)
class PairedDiffSummary:
    """Per-request ``A - B`` differences and their helped/hurt structure."""

    system_a: str
    system_b: str
    metric: str
    diffs: np.ndarray = field(repr=False)
    mean: float
    median: float
    frac_hurt: float
    frac_helped: float
    frac_tied: float
    ecdf: Ecdf = field(repr=False)
    test: TTest | None
    median_ci: tuple[float, float] | None = None

    def as_dict(self):
        return {
            "system_a": self.system_a,
            "system_b": self.system_b,
            "metric": self.metric,
            "n": int(self.diffs.size),
            "mean": self.mean,
            "median": self.median,
            "median_ci": None if self.median_ci is None else list(self.median_ci),
            "frac_hurt": self.frac_hurt,
            "frac_helped": self.frac_helped,
            "frac_tied": self.frac_tied,
            "test": None if self.test is None else self.test.as_dict(),
        }


def paired_diff_values(a, b, system_a="A", system_b="B", metric="", config: BootstrapConfig | None = None,
                       label: str = "") -> PairedDiffSummary:
    a = _as_samples(a)
    b = _as_samples(b)
    if a.shape != b.shape:
        raise ValidationError("paired samples must cover the same requests")
    d = a - b
    n = d.size
    hurt = int(np.count_nonzero(d < 0))
    helped = int(np.count_nonzero(d > 0))
    test = one_sample_t(d) if n >= 2 else None
    median = float(kernels.quantiles(d, np.array([0.5]))[0])
    median_ci = None
    if config is not None and n >= 2:
        lo, hi = bootstrap_ci(d, "median", config.n_boot, config.level, config.seed, label=label)
        median_ci = (min(lo, median), max(hi, median))
    return PairedDiffSummary(
        system_a, system_b, metric, d, float(np.mean(d)), median,
        hurt / n, helped / n, (n - hurt - helped) / n, Ecdf.of(d), test, median_ci,
    )


def paired_diff(frame, system_a: str, system_b: str, metric: str,
                config: BootstrapConfig | None = None) -> PairedDiffSummary:
    """Paired comparison of two systems on one metric of a ``MetricFrame``."""
    if frame.requests is None or len(frame.requests) < 2:
        raise ValidationError("paired comparison needs at least 2 requests")
    return paired_diff_values(frame.column(system_a, metric), frame.column(system_b, metric),
                              system_a, system_b, metric, config,
                              label=f"diff|{system_a}|{system_b}|{metric}")
