"""Distributional evaluation of ranked-output systems."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    AttributeTable,
    Catalog,
    Repetition,
    RepetitionSet,
    Run,
    TruthSet,
    parse_attributes,
    parse_run,
    parse_truth,
    read_repetitions,
    serialize_run,
    synth_fixture,
)
from .errors import DistEvalError, ParseError, ValidationError  # noqa: E402
from .metrics import BrowsingModel, MetricFrame, MetricSpec, evaluate, hit_rate, mrr, ndcg, rbp  # noqa: E402
from .stats import (  # noqa: E402
    BootstrapConfig,
    DistributionSummary,
    PairedDiffSummary,
    bootstrap_ci,
    ecdf,
    kde_grid,
    paired_diff,
    summarize,
)

__all__ = [
    "AttributeTable", "BootstrapConfig", "BrowsingModel", "Catalog", "DistEvalError",
    "DistributionSummary", "MetricFrame", "MetricSpec", "PairedDiffSummary", "ParseError",
    "Repetition", "RepetitionSet", "Run", "TruthSet", "ValidationError", "__version__",
    "bootstrap_ci", "ecdf", "evaluate", "hit_rate", "kde_grid", "mrr", "ndcg", "paired_diff",
    "parse_attributes", "parse_run", "parse_truth", "rbp", "read_repetitions", "serialize_run",
    "summarize", "synth_fixture",
]
