"""Pure-numpy twins of ``_kernels_numba`` (same names, same signatures)."""

import math

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def rank_tables(ranks, gamma=None):
    """Per-rank factors shared by both backends, so their metric values agree bitwise."""
    top = int(ranks.max()) if len(ranks) else 0
    r = np.arange(top, dtype=np.float64)
    if gamma is None:
        return np.log2(r + 2.0)
    return np.power(gamma, r)


def rbp_rows(indptr, ranks, gamma):
    n = len(indptr) - 1
    terms = rank_tables(ranks, gamma)[ranks - 1]
    # bincount adds in input order, matching the compiled loop
    return (1.0 - gamma) * np.bincount(_row_ids(indptr), weights=terms, minlength=n)


def dcg_rows(indptr, ranks, gains):
    n = len(indptr) - 1
    terms = gains / rank_tables(ranks)[ranks - 1]
    return np.bincount(_row_ids(indptr), weights=terms, minlength=n).astype(np.float64)


def first_rank_rows(indptr, ranks):
    n = len(indptr) - 1
    out = np.zeros(n, dtype=np.int64)
    if len(ranks) == 0:
        return out
    rows = _row_ids(indptr)
    big = np.iinfo(np.int64).max
    best = np.full(n, big, dtype=np.int64)
    np.minimum.at(best, rows, ranks.astype(np.int64))
    hit = best != big
    out[hit] = best[hit]
    return out


def accumulate(index, weights, size):
    return np.bincount(index, weights=weights, minlength=size).astype(np.float64)


def _quantile_sorted_rows(xs, probs):
    # xs: (B, n) sorted along axis 1
    n = xs.shape[1]
    out = np.empty((xs.shape[0], len(probs)))
    for i, p in enumerate(probs):
        h = (n - 1) * p
        k = int(math.floor(h))
        if k >= n - 1:
            out[:, i] = xs[:, n - 1]
        else:
            frac = h - k
            out[:, i] = xs[:, k] + (xs[:, k + 1] - xs[:, k]) * frac
    return out


def _wquantile_sorted_rows(xs, ws, probs):
    # ws scaled per row so each row's minimum weight is 1
    total = ws.sum(axis=1)
    start = np.cumsum(ws, axis=1) - ws
    end = start + ws - 1.0
    rows = np.arange(xs.shape[0])
    n = xs.shape[1]
    out = np.empty((xs.shape[0], len(probs)))
    for i, p in enumerate(probs):
        h = (total - 1.0) * p
        j = np.minimum((end < h[:, None]).sum(axis=1), n - 1)
        inside = (h >= start[rows, j]) | (j == 0)
        jm = np.maximum(j - 1, 0)
        prev_end = end[rows, jm]
        gap = start[rows, j] - prev_end
        gap = np.where(inside, 1.0, gap)
        frac = (h - prev_end) / gap
        interp = xs[rows, jm] + (xs[rows, j] - xs[rows, jm]) * frac
        out[:, i] = np.where(inside, xs[rows, j], interp)
    return out


def quantiles(x, probs):
    return _quantile_sorted_rows(np.sort(x)[None, :], probs)[0]


def wquantiles(x, w, probs):
    order = np.argsort(x, kind="mergesort")
    ws = w[order] / w.min()
    return _wquantile_sorted_rows(x[order][None, :], ws[None, :], probs)[0]


def bootstrap_stats(x, idx, probs):
    xb = x[idx]
    out = np.empty((idx.shape[0], len(probs) + 1))
    out[:, 0] = xb.mean(axis=1)
    xb.sort(axis=1)
    out[:, 1:] = _quantile_sorted_rows(xb, probs)
    return out


def bootstrap_stats_weighted(x, w, idx, probs):
    xb = x[idx]
    wb = w[idx]
    out = np.empty((idx.shape[0], len(probs) + 1))
    out[:, 0] = (wb * xb).sum(axis=1) / wb.sum(axis=1)
    order = np.argsort(xb, axis=1, kind="mergesort")
    xs = np.take_along_axis(xb, order, axis=1)
    ws = np.take_along_axis(wb, order, axis=1)
    ws = ws / ws.min(axis=1, keepdims=True)
    out[:, 1:] = _wquantile_sorted_rows(xs, ws, probs)
    return out


def kde_eval(x, grid, bandwidth):
    z = (grid[:, None] - x[None, :]) / bandwidth
    norm = 1.0 / (len(x) * bandwidth * math.sqrt(2.0 * math.pi))
    return np.exp(-0.5 * z * z).sum(axis=1) * norm
