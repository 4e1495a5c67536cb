"""numba implementations of the hot loops.

Every public function here has a twin with the same name and signature in
``_kernels_numpy``; the two are checked against each other in the test suite.
Ragged per-request data is passed as CSR pairs ``(indptr, values)``.  The
quantile and bootstrap entry points are thin Python wrappers that sort with
numpy and hand the sorted data to compiled loops.
"""

import math

import numpy as np

from ._accel import njit
from ._kernels_numpy import rank_tables


def rbp_rows(indptr, ranks, gamma):
    return _weighted_rows(indptr, ranks, rank_tables(ranks, gamma), 1.0 - gamma)


def dcg_rows(indptr, ranks, gains):
    return _discounted_rows(indptr, ranks, gains, rank_tables(ranks))


@njit
def _weighted_rows(indptr, ranks, table, scale):
    n = indptr.shape[0] - 1
    out = np.zeros(n)
    for q in range(n):
        s = 0.0
        for j in range(indptr[q], indptr[q + 1]):
            s += table[ranks[j] - 1]
        out[q] = scale * s
    return out


@njit
def _discounted_rows(indptr, ranks, gains, discount):
    n = indptr.shape[0] - 1
    out = np.zeros(n)
    for q in range(n):
        s = 0.0
        for j in range(indptr[q], indptr[q + 1]):
            s += gains[j] / discount[ranks[j] - 1]
        out[q] = s
    return out


@njit
def first_rank_rows(indptr, ranks):
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    for q in range(n):
        best = 0
        for j in range(indptr[q], indptr[q + 1]):
            if best == 0 or ranks[j] < best:
                best = ranks[j]
        out[q] = best
    return out


@njit
def accumulate(index, weights, size):
    out = np.zeros(size)
    for j in range(index.shape[0]):
        out[index[j]] += weights[j]
    return out


@njit
def _quantile_sorted(xs, p):
    n = xs.shape[0]
    h = (n - 1) * p
    k = int(math.floor(h))
    if k >= n - 1:
        return xs[n - 1]
    frac = h - k
    return xs[k] + (xs[k + 1] - xs[k]) * frac


@njit
def _wquantile_sorted(xs, ws, p):
    # ws already scaled so min(ws) == 1; each value occupies the block
    # [start, start + w - 1] of a virtual expanded sample.
    n = xs.shape[0]
    total = 0.0
    for j in range(n):
        total += ws[j]
    h = (total - 1.0) * p
    start = 0.0
    prev_end = 0.0
    for j in range(n):
        end = start + ws[j] - 1.0
        if h <= end:
            if h >= start or j == 0:
                return xs[j]
            frac = (h - prev_end) / (start - prev_end)
            return xs[j - 1] + (xs[j] - xs[j - 1]) * frac
        prev_end = end
        start = start + ws[j]
    return xs[n - 1]


@njit
def _quantiles_of_sorted(xs, probs):
    out = np.empty(probs.shape[0])
    for i in range(probs.shape[0]):
        out[i] = _quantile_sorted(xs, probs[i])
    return out


@njit
def _wquantiles_of_sorted(xs, ws, probs):
    out = np.empty(probs.shape[0])
    for i in range(probs.shape[0]):
        out[i] = _wquantile_sorted(xs, ws, probs[i])
    return out


# Sorting stays in numpy in the functions below: numpy's sort is several
# times faster than numba's, and only the loops after it are worth compiling.


def quantiles(x, probs):
    return _quantiles_of_sorted(np.sort(x), probs)


def wquantiles(x, w, probs):
    order = np.argsort(x, kind="mergesort")
    ws = w[order]
    return _wquantiles_of_sorted(x[order], ws / ws.min(), probs)


def _sorted_ranks(x):
    order = np.argsort(x, kind="mergesort")
    rank = np.empty(order.shape[0], dtype=np.int64)
    rank[order] = np.arange(order.shape[0])
    return order, rank


def _order_positions(n, probs):
    # 0-based order statistics each percentile needs: floor(h) and the next one
    ks = np.empty(2 * probs.shape[0], dtype=np.int64)
    for i in range(probs.shape[0]):
        k = int(np.floor((n - 1) * probs[i]))
        ks[2 * i] = min(k, n - 1)
        ks[2 * i + 1] = min(k + 1, n - 1)
    pos = np.unique(ks)
    return pos, np.searchsorted(pos, ks)


def bootstrap_stats(x, idx, probs):
    # A resample only reuses values of x, so sorting x once and counting how
    # often each sorted position is drawn yields the resample's order
    # statistics without sorting every replicate.
    order, rank = _sorted_ranks(x)
    pos, slot = _order_positions(x.shape[0], probs)
    return _bootstrap_counts(x, x[order], rank, idx, probs, pos, slot)


@njit
def _bootstrap_counts(x, xs, rank, idx, probs, pos, slot):
    n_boot, n = idx.shape
    m = pos.shape[0]
    out = np.empty((n_boot, probs.shape[0] + 1))
    counts = np.zeros(n, dtype=np.int64)
    vals = np.empty(m)
    for b in range(n_boot):
        counts[:] = 0
        s = 0.0
        for j in range(n):
            i = idx[b, j]
            s += x[i]
            counts[rank[i]] += 1
        out[b, 0] = s / n
        cum = 0
        t = 0
        for p in range(n):
            c = counts[p]
            if c == 0:
                continue
            cum += c
            while t < m and pos[t] < cum:
                vals[t] = xs[p]
                t += 1
            if t == m:
                break
        for i in range(probs.shape[0]):
            h = (n - 1) * probs[i]
            k = int(math.floor(h))
            lo = vals[slot[2 * i]]
            if k >= n - 1:
                out[b, i + 1] = lo
            else:
                out[b, i + 1] = lo + (vals[slot[2 * i + 1]] - lo) * (h - k)
    return out


def bootstrap_stats_weighted(x, w, idx, probs):
    order, rank = _sorted_ranks(x)
    return _bootstrap_counts_weighted(x, w, x[order], w[order], rank, idx, probs)


@njit
def _bootstrap_counts_weighted(x, w, xs, wsorted, rank, idx, probs):
    n_boot, n = idx.shape
    out = np.empty((n_boot, probs.shape[0] + 1))
    counts = np.zeros(n, dtype=np.int64)
    for b in range(n_boot):
        counts[:] = 0
        sw = 0.0
        swx = 0.0
        for j in range(n):
            i = idx[b, j]
            sw += w[i]
            swx += w[i] * x[i]
            counts[rank[i]] += 1
        out[b, 0] = swx / sw
        wmin = np.inf
        for p in range(n):
            if counts[p] > 0 and wsorted[p] < wmin:
                wmin = wsorted[p]
        total = 0.0
        for p in range(n):
            for _ in range(counts[p]):
                total += wsorted[p] / wmin
        for i in range(probs.shape[0]):
            h = (total - 1.0) * probs[i]
            start = 0.0
            prev_end = 0.0
            prev_x = 0.0
            first = True
            value = 0.0
            found = False
            for p in range(n):
                wp = wsorted[p] / wmin
                for _ in range(counts[p]):
                    end = start + wp - 1.0
                    if h <= end:
                        if h >= start or first:
                            value = xs[p]
                        else:
                            value = prev_x + (xs[p] - prev_x) * ((h - prev_end) / (start - prev_end))
                        found = True
                        break
                    prev_end = end
                    start += wp
                    prev_x = xs[p]
                    first = False
                if found:
                    break
            if not found:
                value = prev_x
            out[b, i + 1] = value
    return out


@njit
def kde_eval(x, grid, bandwidth):
    n = x.shape[0]
    norm = 1.0 / (n * bandwidth * math.sqrt(2.0 * math.pi))
    out = np.empty(grid.shape[0])
    for g in range(grid.shape[0]):
        s = 0.0
        for j in range(n):
            z = (grid[g] - x[j]) / bandwidth
            s += math.exp(-0.5 * z * z)
        out[g] = s * norm
    return out
