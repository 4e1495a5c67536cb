"""Command-line entry point: ``disteval <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .data import Catalog, read_attributes, read_repetitions, read_run, read_truth, synth_fixture, write_fixture
from .errors import DistEvalError, ValidationError
from .exposure import analyze_exposure
from .metrics import BrowsingModel, MetricSpec, evaluate, parse_metrics
from .report import build_report, digest_file, dumps, make_provenance, render_summary_table, Report
from .repetitions import evaluate_repetitions, stability_report
from .stats import BootstrapConfig, paired_diff, summarize
from .subgroups import disaggregate, group_change
from .uncertainty import BetaPrior, default_grid, posterior_metric, sweep_patience

RANDOMIZED = {"eval", "compare", "subgroup", "posterior", "reps", "synth"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pair(text):
    parts = text.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected A,B, got {text!r}")
    return tuple(parts)


def _default_threads():
    try:
        return max(1, int(os.environ.get("DISTEVAL_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("inputs")
    g.add_argument("--runs", nargs="+", default=[], metavar="[LABEL=]PATH",
                   help="run files; LABEL= overrides the system id")
    g.add_argument("--truth", type=Path)
    g.add_argument("--user-attrs", type=Path)
    g.add_argument("--item-attrs", type=Path)
    g.add_argument("--reps-dir", type=Path)
    g = common.add_argument_group("model")
    g.add_argument("--gamma", type=float, default=0.8)
    g.add_argument("--convention", choices=("shifted", "classic"), default="shifted")
    g.add_argument("--depth", type=int, default=1000)
    g.add_argument("--metrics", default="rbp,ndcg,mrr,hr", help="comma list: rbp, rbp(G), ndcg, mrr, hr, hr@K")
    g.add_argument("--k", type=_ints, default=[10, 20], help="hit-rate cutoffs added to --metrics")
    g.add_argument("--metric", help="metric for comparisons and the summary table (default rbp at --gamma)")
    g = common.add_argument_group("statistics")
    g.add_argument("--boot", type=int, default=1000, help="bootstrap resamples")
    g.add_argument("--level", type=float, default=0.95)
    g.add_argument("--seed", type=int)
    g.add_argument("--percentiles", type=_floats, default=[10, 50, 90])
    g.add_argument("--attribute")
    g.add_argument("--pair", type=_pair, action="append", help="A,B system pair (repeatable)")
    g.add_argument("--grid-step", type=float, default=0.05)
    g.add_argument("--grid", type=_floats)
    g.add_argument("--prior", type=_floats, default=[5.0, 2.0], help="Beta shapes a,b")
    g.add_argument("--samples", type=int, default=1000, help="posterior draws")
    g.add_argument("--statistic", default="mean", help="per-repetition statistic: mean, median or a percentile")
    g = common.add_argument_group("output")
    g.add_argument("--out", type=Path)
    g.add_argument("--in", dest="input", type=Path, help="report.json for the report subcommand")
    g.add_argument("--no-sidecars", action="store_true")
    g.add_argument("--quiet", action="store_true", help="suppress the stdout table")
    g.add_argument("--threads", type=int, default=_default_threads())
    g = common.add_argument_group("synth")
    g.add_argument("--n-requests", type=int, default=200)
    g.add_argument("--catalog-size", type=int, default=500)
    g.add_argument("--n-relevant", type=int, default=5)
    g.add_argument("--list-length", type=int, default=100)
    g.add_argument("--n-systems", type=int, default=2)

    parser = _Parser(prog="disteval", description="Distributional evaluation of ranked outputs.")
    parser.add_argument("--version", action="version", version=f"disteval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("eval", "per-request metrics and their distributions"),
        ("compare", "paired differences between systems"),
        ("subgroup", "metric distributions by user attribute"),
        ("exposure", "item exposure, concentration and divergence from targets"),
        ("sweep", "mean RBP across patience values"),
        ("posterior", "mean RBP under a Beta prior on patience"),
        ("reps", "distributions across repeated experiments"),
        ("synth", "write a synthetic fixture"),
        ("report", "render the summary table of an existing report"),
    ]:
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _require(args, *names):
    for name in names:
        value = getattr(args, name)
        if value is None or value == []:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")


def _load_runs(args):
    runs, sources = {}, {}
    for spec in args.runs:
        label, _, path = spec.rpartition("=") if "=" in spec else ("", "", spec)
        run = read_run(path)
        sid = label or run.system_id
        if sid in runs:
            k = 2
            while f"{sid}#{k}" in runs:
                k += 1
            print(f"disteval: warning: duplicate system {sid!r} renamed to {sid}#{k}", file=sys.stderr)
            sid = f"{sid}#{k}"
        runs[sid] = run.with_system_id(sid)
        sources[f"runs/{sid}"] = path
    return runs, sources


def _model(args):
    return BrowsingModel(args.gamma, args.convention, args.depth)


def _metrics(args):
    names = [m for m in args.metrics.split(",") if m.strip()]
    names += [f"hr@{k}" for k in args.k]
    seen, specs = set(), []
    for spec in parse_metrics(dict.fromkeys(names), args.gamma):
        if spec.id not in seen:
            seen.add(spec.id)
            specs.append(spec)
    return specs


def _primary(args, frame_metrics=None):
    metric = MetricSpec.parse(args.metric, args.gamma).id if args.metric else MetricSpec("rbp", args.gamma).id
    if frame_metrics is not None and metric not in frame_metrics:
        raise ValidationError(f"metric {metric!r} was not evaluated")
    return metric


def _bootstrap(args):
    return BootstrapConfig(args.boot, args.level, args.seed if args.seed is not None else 0)


def _pairs(args, systems):
    if args.pair:
        for a, b in args.pair:
            for s in (a, b):
                if s not in systems:
                    raise ValidationError(f"unknown system {s!r} in --pair")
        return list(args.pair)
    return [(a, b) for i, a in enumerate(systems) for b in systems[i + 1:]]


def _percentiles(args):
    return [p for p in args.percentiles if p != 50]


def _finish(args, report: Report, table: str | None):
    _require(args, "out")
    report.write(args.out, sidecars=not args.no_sidecars)
    if table and not args.quiet:
        sys.stdout.write(table)


def _distributions(frame, args, config):
    out = {}
    for s in frame.systems:
        for m in frame.metrics:
            out[(s, m)] = summarize(frame.column(s, m), _percentiles(args), config, label=f"{s}|{m}")
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(args, compare=False):
    _require(args, "runs", "truth")
    runs, sources = _load_runs(args)
    truth = read_truth(args.truth)
    model = _model(args)
    frame = evaluate(runs, truth, _metrics(args), model)
    primary = _primary(args, frame.metrics)
    config = _bootstrap(args)
    diffs = []
    if compare:
        if len(frame.systems) < 2:
            raise ValidationError("compare needs at least two systems")
        systems = list(runs)
        for a, b in _pairs(args, systems):
            for m in frame.metrics:
                diffs.append(paired_diff(frame, a, b, m, config))
    prov = make_provenance({**sources, "truth": args.truth}, args.seed, model, config,
                           command=args.command, primary_metric=primary,
                           percentiles=sorted(set(args.percentiles)))
    report = build_report(prov, frame=frame, distributions=_distributions(frame, args, config),
                          differences=diffs or None, bootstrap=config)
    table = render_summary_table(report, primary)
    for d in diffs:
        if d.metric == primary:
            t = d.test
            p = "n/a" if t is None or t.p is None else f"{t.p:.4g}"
            table += (f"{d.system_a} - {d.system_b}: median {d.median:.4g}, helped {d.frac_helped:.3f}, "
                      f"hurt {d.frac_hurt:.3f}, p {p}\n")
    _finish(args, report, table)


def cmd_subgroup(args):
    _require(args, "runs", "truth", "user_attrs", "attribute")
    runs, sources = _load_runs(args)
    truth = read_truth(args.truth)
    users = read_attributes(args.user_attrs, "user")
    model = _model(args)
    frame = evaluate(runs, truth, _metrics(args), model)
    primary = _primary(args, frame.metrics)
    config = _bootstrap(args)
    items = [disaggregate(frame, users, args.attribute, primary, s, config, _percentiles(args))
             for s in frame.systems]
    if args.pair or len(frame.systems) >= 2:
        for a, b in _pairs(args, list(runs)):
            items.append(group_change(frame, users, args.attribute, primary, a, b, config))
    prov = make_provenance({**sources, "truth": args.truth, "user_attrs": args.user_attrs}, args.seed,
                           model, config, command=args.command, primary_metric=primary,
                           attribute=args.attribute)
    report = build_report(prov, frame=frame, subgroups=items, bootstrap=config)
    lines = [f"{primary} by {args.attribute}"]
    for g in items:
        if hasattr(g, "system"):
            for label in sorted(g.groups):
                e = g.groups[label].mean
                lines.append(f"  {g.system:<12} {label:<12} n={g.sizes[label]:<6} mean {e.value:.4f} "
                             f"({e.lo:.4f}, {e.hi:.4f})")
    _finish(args, report, "\n".join(lines) + "\n")


def cmd_exposure(args):
    _require(args, "runs", "truth")
    runs, sources = _load_runs(args)
    truth = read_truth(args.truth)
    items = read_attributes(args.item_attrs, "item") if args.item_attrs else None
    if args.attribute and items is None:
        raise UsageError("--attribute needs --item-attrs for exposure")
    model = _model(args)
    catalog = Catalog.build(runs.values(), truth, items)
    ex = analyze_exposure(runs, truth, model, catalog, items, args.attribute)
    inputs = {**sources, "truth": args.truth}
    if args.item_attrs:
        inputs["item_attrs"] = args.item_attrs
    prov = make_provenance(inputs, args.seed, model, None, command=args.command, attribute=args.attribute)
    report = build_report(prov, exposure=ex)
    lines = [f"{'System':<12} {'Gini':>8} {'L2':>12} {'KL':>10}"]
    for s, se in sorted(ex.systems.items()):
        lines.append(f"{s:<12} {se.gini:>8.4f} {se.l2_ideal:>12.6g} {se.kl_ideal:>10.4f}")
    _finish(args, report, "\n".join(lines) + "\n")


def cmd_sweep(args):
    _require(args, "runs", "truth")
    runs, sources = _load_runs(args)
    truth = read_truth(args.truth)
    users = read_attributes(args.user_attrs, "user") if args.user_attrs else None
    model = _model(args)
    grid = args.grid if args.grid else default_grid(args.grid_step)
    res = sweep_patience(runs, truth, grid, model, users, args.attribute)
    inputs = {**sources, "truth": args.truth}
    if args.user_attrs:
        inputs["user_attrs"] = args.user_attrs
    prov = make_provenance(inputs, args.seed, model, None, command=args.command, attribute=args.attribute)
    report = build_report(prov, uncertainty=[res])
    systems = sorted(res.means)
    lines = ["gamma  " + "  ".join(f"{s:>10}" for s in systems)]
    for j, g in enumerate(res.grid):
        lines.append(f"{g:<5.3g}  " + "  ".join(f"{res.means[s][j]:>10.6f}" for s in systems))
    for c in res.crossovers:
        lines.append(f"crossover {c.system_a}/{c.system_b} in [{c.lo:g}, {c.hi:g}]")
    _finish(args, report, "\n".join(lines) + "\n")


def cmd_posterior(args):
    _require(args, "runs", "truth")
    if len(args.prior) != 2:
        raise UsageError("--prior takes two shapes a,b")
    runs, sources = _load_runs(args)
    truth = read_truth(args.truth)
    users = read_attributes(args.user_attrs, "user") if args.user_attrs else None
    model = _model(args)
    config = _bootstrap(args)
    prior = BetaPrior(*args.prior)
    res = posterior_metric(runs, truth, prior, args.samples, args.seed, model, users, args.attribute, config)
    inputs = {**sources, "truth": args.truth}
    if args.user_attrs:
        inputs["user_attrs"] = args.user_attrs
    prov = make_provenance(inputs, args.seed, model, config, command=args.command, attribute=args.attribute)
    report = build_report(prov, uncertainty=[res], bootstrap=config)
    lines = [f"Beta({prior.a:g}, {prior.b:g}) prior, {args.samples} draws"]
    for s, summ in sorted(res.summaries.items()):
        lines.append(f"  {s:<12} mean {summ.mean.value:.5f}  10% {summ.percentile(10).value:.5f}  "
                     f"median {summ.median.value:.5f}  90% {summ.percentile(90).value:.5f}")
    _finish(args, report, "\n".join(lines) + "\n")


def cmd_reps(args):
    _require(args, "reps_dir")
    repset = read_repetitions(args.reps_dir)
    users = read_attributes(args.user_attrs, "user") if args.user_attrs else None
    model = _model(args)
    config = _bootstrap(args)
    specs = _metrics(args)
    primary = _primary(args, [s.id for s in specs])
    frame = evaluate_repetitions(repset, specs, model, args.statistic, users, args.attribute, args.threads)
    stab = []
    for a, b in _pairs(args, list(frame.systems)):
        for g in frame.groups:
            stab.append(stability_report(frame, a, b, primary, g, config))
    inputs = {}
    root = Path(args.reps_dir)
    for p in sorted(root.rglob("*")):
        if p.is_file():
            inputs[f"reps/{p.relative_to(root).as_posix()}"] = p
    if args.user_attrs:
        inputs["user_attrs"] = args.user_attrs
    prov = make_provenance(inputs, args.seed, model, config, command=args.command, primary_metric=primary,
                           attribute=args.attribute)
    report = build_report(prov, repetitions=(frame, stab), bootstrap=config)
    lines = [f"{len(frame.rep_ids)} repetitions, {primary} ({frame.statistic})"]
    for st in stab:
        lines.append(f"  {st.system_a} - {st.system_b} [{st.group or 'all'}]: mean diff "
                     f"{st.summary.mean.value:.5f}, A ahead in {st.sign_consistency:.2f} of repetitions")
    _finish(args, report, "\n".join(lines) + "\n")


def cmd_synth(args):
    _require(args, "out")
    runs, truth, attrs = synth_fixture(args.seed, args.n_requests, args.catalog_size, args.n_relevant,
                                       args.list_length, args.n_systems)
    files = write_fixture(args.out, runs, truth, attrs)
    manifest = {
        "tool": "disteval", "tool_version": __version__, "seed": args.seed,
        "parameters": {"n_requests": args.n_requests, "catalog_size": args.catalog_size,
                       "n_relevant": args.n_relevant, "list_length": args.list_length,
                       "n_systems": args.n_systems},
        "files": {f: digest_file(Path(args.out) / f) for f in files},
    }
    (Path(args.out) / "fixture.json").write_text(dumps(manifest), encoding="utf-8")
    if not args.quiet:
        print(f"wrote {len(files)} files to {args.out}")


def cmd_report(args):
    _require(args, "input")
    report = Report.from_json(Path(args.input).read_text(encoding="utf-8"))
    metric = MetricSpec.parse(args.metric, args.gamma).id if args.metric else None
    sys.stdout.write(render_summary_table(report, metric))


COMMANDS = {
    "eval": cmd_eval,
    "compare": lambda a: cmd_eval(a, compare=True),
    "subgroup": cmd_subgroup,
    "exposure": cmd_exposure,
    "sweep": cmd_sweep,
    "posterior": cmd_posterior,
    "reps": cmd_reps,
    "synth": cmd_synth,
    "report": cmd_report,
}


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": str(message).replace("\n", " ")}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in RANDOMIZED and args.seed is None:
            raise UsageError(f"--seed is required for {args.command}")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        COMMANDS[args.command](args)
    except UsageError as e:
        return _fail("usage", e, 2)
    except DistEvalError as e:
        return _fail(e.kind, e, 1)
    except OSError as e:
        return _fail("io", f"{e.strerror or e}: {e.filename}" if e.filename else e, 1)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
