"""Active kernel set, chosen by ``DISTEVAL_BACKEND`` (see ``_accel``)."""

from . import _kernels_numpy
from ._accel import BACKEND, HAVE_NUMBA

if BACKEND == "numba":
    from . import _kernels_numba as _impl
else:
    _impl = _kernels_numpy

rbp_rows = _impl.rbp_rows
dcg_rows = _impl.dcg_rows
first_rank_rows = _impl.first_rank_rows
accumulate = _impl.accumulate
quantiles = _impl.quantiles
wquantiles = _impl.wquantiles
bootstrap_stats = _impl.bootstrap_stats
bootstrap_stats_weighted = _impl.bootstrap_stats_weighted
kde_eval = _impl.kde_eval

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "rbp_rows",
    "dcg_rows",
    "first_rank_rows",
    "accumulate",
    "quantiles",
    "wquantiles",
    "bootstrap_stats",
    "bootstrap_stats_weighted",
    "kde_eval",
]
