"""Versioned JSON report, sidecar plot-data CSVs and the text summary table."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ValidationError
from .exposure import KL_SMOOTHING, ExposureAnalysis
from .metrics import BrowsingModel, MetricFrame
from .repetitions import RepetitionFrame, StabilityReport, across_repetitions
from .stats import BootstrapConfig, DistributionSummary, Ecdf, PairedDiffSummary, difference_bounds, kde_grid
from .subgroups import GroupChange, GroupedSummary
from .uncertainty import PosteriorResult, SweepResult

SCHEMA_VERSION = "1.0"
SECTIONS = ("pointwise", "distributions", "differences", "subgroups", "exposure", "uncertainty", "repetitions")

EXPOSURE_CONVENTIONS = {
    "l2": "squared Euclidean distance between normalized vectors",
    "kl": f"KL(system || target) in nats; target smoothed by {KL_SMOOTHING:g} and renormalized "
          "only where it has zero mass under positive system mass",
    "gini_population": "full catalog, zero-exposure items included",
    "ideal_truncation": "non-relevant items receive zero ideal exposure",
}


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(text)).strip("_") or "_"


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def make_provenance(inputs: Mapping[str, object] | None = None, seed: int | None = None,
                    model: BrowsingModel | None = None, bootstrap: BootstrapConfig | None = None,
                    **extra) -> dict:
    """Provenance block; ``inputs`` maps a name to a path or raw bytes."""
    digests = {}
    for name, src in sorted((inputs or {}).items()):
        if isinstance(src, (bytes, bytearray)):
            digests[name] = digest_bytes(bytes(src))
        else:
            digests[name] = digest_file(src)
    prov = {"tool": "disteval", "tool_version": __version__, "inputs": digests, "seed": seed}
    if model is not None:
        prov.update(gamma=model.gamma, convention=model.convention, depth=model.depth)
    if bootstrap is not None:
        prov["bootstrap"] = bootstrap.as_dict()
    prov.update(extra)
    return prov


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValidationError("report values must be finite")
        return v
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


@dataclass
class Report:
    data: dict
    sidecars: dict[str, tuple[tuple[str, ...], list]] = field(default_factory=dict)

    def to_json(self) -> str:
        return dumps(self.data)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        data = json.loads(text)
        if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError("not a disteval report or unsupported schema version")
        return cls(data)

    def section(self, name: str) -> dict:
        try:
            return self.data["analysis"][name]
        except KeyError:
            raise ValidationError(f"report has no {name!r} section") from None

    def sidecar_csv(self, name: str) -> str:
        header, rows = self.sidecars[name]
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return out.getvalue()

    def write(self, out_dir, sidecars: bool = True) -> Path:
        """Write sidecars, then ``report.json`` last via an atomic rename."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if sidecars:
            for name in sorted(self.sidecars):
                path = out / name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(self.sidecar_csv(name), encoding="utf-8")
        target = out / "report.json"
        tmp = out / ".report.json.tmp"
        tmp.write_text(self.to_json(), encoding="utf-8")
        os.replace(tmp, target)
        return target


# ---------------------------------------------------------------------------
# section builders


def _ecdf_rows(ecdf):
    return [(x, f) for x, f in ecdf.points()]


def _add_plot(sidecars, prefix, ecdf, kde):
    sidecars[f"{prefix}__ecdf.csv"] = (("x", "cdf"), _ecdf_rows(ecdf))
    if kde is not None:
        sidecars[f"{prefix}__kde.csv"] = (("x", "density"), kde.points())


def _pointwise(frame: MetricFrame, sidecars):
    sidecars["pointwise/metric_frame.csv"] = (
        ("system_id", "metric_id", "request_id", "value"),
        [(s, m, q, float(frame.values[si, mi, qi]))
         for si, s in enumerate(frame.systems)
         for mi, m in enumerate(frame.metrics)
         for qi, q in enumerate(frame.requests)],
    )
    return {
        "n_requests": len(frame.requests),
        "means": frame.means(),
        "missing_requests": {s: list(frame.missing.get(s, ())) for s in frame.systems},
    }


def _distributions(dists: Mapping[tuple[str, str], DistributionSummary], sidecars):
    out: dict = {}
    for (system, metric), summ in sorted(dists.items()):
        out.setdefault(system, {})[metric] = summ.as_dict()
        _add_plot(sidecars, f"distributions/{slug(system)}__{slug(metric)}", summ.ecdf, summ.kde)
    return out


def _diff_kde(d):
    if d.diffs.size < 2:
        return None
    return kde_grid(d.diffs, 50, difference_bounds(d.diffs))


def _differences(diffs: Iterable[PairedDiffSummary], sidecars):
    out: dict = {}
    for d in diffs:
        key = f"{d.system_a} vs {d.system_b}"
        out.setdefault(key, {})[d.metric] = d.as_dict()
        _add_plot(sidecars, f"differences/{slug(d.system_a)}__{slug(d.system_b)}__{slug(d.metric)}",
                  d.ecdf, _diff_kde(d))
    return out


def _subgroups(items: Iterable[GroupedSummary | GroupChange], sidecars):
    out: dict = {}
    for item in items:
        attr = out.setdefault(item.attribute, {})
        if isinstance(item, GroupedSummary):
            block = attr.setdefault("summaries", {}).setdefault(item.system, {})
            groups = {}
            for label, summ in item.groups.items():
                groups[label] = {**summ.as_dict(), "size": item.sizes[label], "weight": item.weights[label]}
                _add_plot(sidecars, f"subgroups/{slug(item.attribute)}__{slug(item.system)}__"
                          f"{slug(item.metric)}__{slug(label)}", summ.ecdf, summ.kde)
            block[item.metric] = {"groups": groups, "gaps": [g.as_dict() for g in item.gaps]}
        elif isinstance(item, GroupChange):
            key = f"{item.system_a} vs {item.system_b}"
            block = attr.setdefault("changes", {}).setdefault(key, {})
            block[item.metric] = {label: d.as_dict() for label, d in item.groups.items()}
            for label, d in item.groups.items():
                _add_plot(sidecars, f"subgroups/{slug(item.attribute)}__{slug(item.system_a)}__"
                          f"{slug(item.system_b)}__{slug(item.metric)}__{slug(label)}__change",
                          d.ecdf, _diff_kde(d))
        else:
            raise TypeError(f"unexpected subgroup result {type(item).__name__}")
    return out


def _exposure(ex: ExposureAnalysis, sidecars):
    systems = sorted(ex.systems)
    sidecars["exposure/items.csv"] = (
        ("item_id", "ideal", *systems),
        [(item, float(ex.ideal.masses[j]), *(float(ex.systems[s].raw.masses[j]) for s in systems))
         for j, item in enumerate(ex.ideal.labels)],
    )
    out = {
        "conventions": EXPOSURE_CONVENTIONS,
        "gamma": ex.model.gamma,
        "convention": ex.model.convention,
        "depth": ex.model.depth,
        "catalog_size": ex.catalog_size,
        "ideal_gini": ex.ideal_gini,
        "requests_without_relevant": len(ex.empty_requests),
        "systems": {},
    }
    for s in systems:
        se = ex.systems[s]
        entry = {"gini": se.gini, "l2_ideal": se.l2_ideal, "kl_ideal": se.kl_ideal, "total_mass": se.raw.total}
        sidecars[f"exposure/{slug(s)}__lorenz.csv"] = (("population_share", "exposure_share"),
                                                     [tuple(r) for r in se.lorenz.tolist()])
        sidecars[f"exposure/{slug(s)}__ecdf.csv"] = (("exposure", "cdf"), _ecdf_rows(Ecdf.of(se.raw.masses)))
        if se.groups is not None:
            entry["groups"] = {
                "exposure": se.groups.normalize().as_dict(),
                "l2": dict(se.group_l2),
                "kl": dict(se.group_kl),
            }
        out["systems"][s] = entry
    if ex.attribute is not None:
        out["attribute"] = ex.attribute
        out["prevalence"] = ex.prevalence.as_dict()
        out["ideal_groups"] = ex.ideal_groups.normalize().as_dict()
        labels = ex.prevalence.labels
        sidecars["exposure/groups.csv"] = (
            ("group", "prevalence", "ideal", *systems),
            [(g, ex.prevalence[g], ex.ideal_groups.normalize()[g],
              *(ex.systems[s].groups.normalize()[g] for s in systems)) for g in labels],
        )
    return out


def _uncertainty(items: Iterable[SweepResult | PosteriorResult], sidecars):
    out: dict = {}
    for item in items:
        if isinstance(item, SweepResult):
            rows = []
            for sid in sorted(item.means):
                rows.extend((float(g), sid, "", float(v)) for g, v in zip(item.grid, item.means[sid]))
            for (sid, grp), vals in sorted(item.group_means.items()):
                rows.extend((float(g), sid, grp, float(v)) for g, v in zip(item.grid, vals))
            sidecars["uncertainty/sweep.csv"] = (("gamma", "system_id", "group", "mean_rbp"), rows)
            out["sweep"] = {
                "convention": item.convention,
                "grid": item.grid,
                "means": {s: v for s, v in sorted(item.means.items())},
                "crossovers": [c.as_dict() for c in item.crossovers],
                "attribute": item.attribute,
                "group_means": {f"{s}|{g}": v for (s, g), v in sorted(item.group_means.items())},
            }
        elif isinstance(item, PosteriorResult):
            systems = sorted(item.samples)
            sidecars["uncertainty/posterior_samples.csv"] = (
                ("draw", "gamma", *systems),
                [(j, float(item.gammas[j]), *(float(item.samples[s][j]) for s in systems))
                 for j in range(item.gammas.size)],
            )
            for s in systems:
                _add_plot(sidecars, f"uncertainty/posterior__{slug(s)}", item.summaries[s].ecdf,
                          item.summaries[s].kde)
            out["posterior"] = {
                "prior": {"family": "beta", "a": item.prior.a, "b": item.prior.b},
                "n_samples": int(item.gammas.size),
                "systems": {s: {**item.summaries[s].as_dict(), "degenerate": item.degenerate[s]}
                            for s in systems},
                "attribute": item.attribute,
                "group_means": {f"{s}|{g}": float(np.mean(v)) for (s, g), v in sorted(item.group_samples.items())},
            }
        else:
            raise TypeError(f"unexpected uncertainty result {type(item).__name__}")
    return out


def _repetitions(repframe: RepetitionFrame, stability: Sequence[StabilityReport], config, sidecars):
    sidecars["repetitions/frame.csv"] = (
        ("repetition_id", "system_id", "metric_id", "group", "value"),
        [(*k, float(repframe.values[k])) for k in sorted(repframe.values)],
    )
    across: dict = {}
    for s in repframe.systems:
        for m in repframe.metrics:
            for g in repframe.groups:
                summ = across_repetitions(repframe, s, m, g, config)
                across.setdefault(s, {}).setdefault(m, {})[g or "all"] = summ.as_dict()
    stab = []
    for st in stability:
        stab.append({
            "system_a": st.system_a, "system_b": st.system_b, "metric": st.metric,
            "group": st.group or "all", "differences": st.differences,
            "sign_consistency": st.sign_consistency, "summary": st.summary.as_dict(),
        })
        _add_plot(sidecars, f"repetitions/{slug(st.system_a)}__{slug(st.system_b)}__{slug(st.metric)}"
                  f"__{slug(st.group or 'all')}", st.summary.ecdf, st.summary.kde)
    return {
        "statistic": repframe.statistic,
        "rep_ids": list(repframe.rep_ids),
        "attribute": repframe.attribute,
        "across": across,
        "stability": stab,
    }


def build_report(provenance: Mapping, *, frame: MetricFrame | None = None,
                 distributions: Mapping[tuple[str, str], DistributionSummary] | None = None,
                 differences: Sequence[PairedDiffSummary] | None = None,
                 subgroups: Sequence[GroupedSummary | GroupChange] | None = None,
                 exposure: ExposureAnalysis | None = None,
                 uncertainty: Sequence[SweepResult | PosteriorResult] | None = None,
                 repetitions: tuple[RepetitionFrame, Sequence[StabilityReport]] | None = None,
                 bootstrap: BootstrapConfig = BootstrapConfig()) -> Report:
    """Assemble analysis results; sections left as ``None`` are omitted."""
    sidecars: dict = {}
    analysis = {}
    if frame is not None:
        analysis["pointwise"] = _pointwise(frame, sidecars)
    if distributions:
        analysis["distributions"] = _distributions(distributions, sidecars)
    if differences:
        analysis["differences"] = _differences(differences, sidecars)
    if subgroups:
        analysis["subgroups"] = _subgroups(subgroups, sidecars)
    if exposure is not None:
        analysis["exposure"] = _exposure(exposure, sidecars)
    if uncertainty:
        analysis["uncertainty"] = _uncertainty(uncertainty, sidecars)
    if repetitions is not None:
        analysis["repetitions"] = _repetitions(repetitions[0], repetitions[1], bootstrap, sidecars)
    if not analysis:
        raise ValidationError("report has no sections")
    data = _plain({"schema_version": SCHEMA_VERSION, "provenance": dict(provenance), "analysis": analysis})
    return Report(data, sidecars)


# ---------------------------------------------------------------------------
# text table


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_summary_table(report: Report, metric: str | None = None) -> str:
    """Fixed-width table: one row per system, each statistic over its CI."""
    dists = report.section("distributions")
    if metric is None:
        metric = report.data.get("provenance", {}).get("primary_metric")
    systems = sorted(dists)
    if metric is None:
        metric = sorted(dists[systems[0]])[0]
    cols: list[tuple[str, str | None]] = [("Mean", None)]
    pcts = set()
    for s in systems:
        if metric not in dists[s]:
            raise ValidationError(f"metric {metric!r} missing for system {s!r}")
        pcts |= set(dists[s][metric]["percentiles"])
    pcts.add("50")
    for p in sorted(pcts, key=float):
        cols.append(("Median" if float(p) == 50 else f"{float(p):g}%ile", p))

    def cell(summ, key):
        if key is None:
            est = summ["mean"]
        elif float(key) == 50 and key not in summ["percentiles"]:
            est = summ["median"]
        else:
            est = summ["percentiles"][key]
        return _fmt(est["value"]), f"({_fmt(est['ci'][0])}, {_fmt(est['ci'][1])})"

    rows = []
    for s in systems:
        cells = [cell(dists[s][metric], key) for _, key in cols]
        rows.append((s, cells))
    name_w = max([len("System")] + [len(s) for s in systems])
    widths = [max([len(h)] + [max(len(c[j][0]), len(c[j][1])) for _, c in rows])
              for j, (h, _) in enumerate(cols)]
    lines = [f"{metric}  (n={dists[systems[0]][metric]['n']}, CI level {dists[systems[0]][metric]['ci_level']:g})"]
    lines.append("  ".join([f"{'System':<{name_w}}"] + [f"{h:>{w}}" for (h, _), w in zip(cols, widths)]))
    lines.append("  ".join(["-" * name_w] + ["-" * w for w in widths]))
    for s, cells in rows:
        lines.append("  ".join([f"{s:<{name_w}}"] + [f"{c[0]:>{w}}" for c, w in zip(cells, widths)]))
        lines.append("  ".join([" " * name_w] + [f"{c[1]:>{w}}" for c, w in zip(cells, widths)]))
    return "\n".join(lines) + "\n"
