import math

import numpy as np
import pytest

from disteval import _kernels_numpy
from disteval._accel import HAVE_NUMBA

BACKENDS = [_kernels_numpy]
if HAVE_NUMBA:
    from disteval import _kernels_numba

    BACKENDS.append(_kernels_numba)


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit("_", 1)[-1])
def impl(request):
    return request.param


# brute-force reference metrics: plain loops, no shared code with the package


def brute_rbp(items, truth, gamma, depth=1000, convention="shifted"):
    total = 0.0
    for i, item in enumerate(items[:depth], 1):
        if truth.get(item, 0) > 0:
            total += gamma ** (i if convention == "shifted" else i - 1)
    return (1 - gamma) * total


def brute_ndcg(items, truth, depth=1000):
    dcg = sum(truth.get(it, 0) / math.log2(i + 1) for i, it in enumerate(items[:depth], 1))
    ideal = sorted(truth.values(), reverse=True)[:depth]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, 1))
    return dcg / idcg if idcg > 0 else 0.0


def brute_mrr(items, truth, depth=1000):
    for i, it in enumerate(items[:depth], 1):
        if truth.get(it, 0) > 0:
            return 1.0 / i
    return 0.0


def brute_hr(items, truth, k):
    return 1.0 if any(truth.get(it, 0) > 0 for it in items[:k]) else 0.0


def random_pairs(seed, n_pairs, catalog=200, max_len=50, max_rel=10):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_pairs):
        k = int(rng.integers(1, max_len + 1))
        items = [f"i{j}" for j in rng.choice(catalog, size=k, replace=False)]
        r = int(rng.integers(0, max_rel + 1))
        truth = {f"i{j}": 1.0 for j in rng.choice(catalog, size=r, replace=False)}
        out.append((items, truth))
    return out


# acceptance criteria report one line each; the lines are repeated in the
# terminal summary so they survive output capture


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    lines = request.config._acceptance_lines

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
