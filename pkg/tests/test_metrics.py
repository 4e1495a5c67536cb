import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_hr, brute_mrr, brute_ndcg, brute_rbp, random_pairs
from disteval.data import Run, TruthSet
from disteval.errors import ValidationError
from disteval.metrics import (
    BrowsingModel,
    MetricFrame,
    MetricSpec,
    evaluate,
    hit_rate,
    mrr,
    ndcg,
    parse_metrics,
    rbp,
)

SHIFTED = BrowsingModel(0.8, "shifted")


def test_rbp_examples():
    assert rbp(["a"], {"a": 1}, SHIFTED) == pytest.approx(0.16, abs=1e-15)
    # (1 - 0.5) * (0.5 + 0.25)
    assert rbp(["a", "b"], {"a": 1, "b": 1}, BrowsingModel(0.5)) == pytest.approx(0.375, abs=1e-15)
    assert rbp(["a", "b"], {"c": 1}, SHIFTED) == 0.0
    assert rbp(["a"], {"a": 1}, BrowsingModel(0.8, "classic")) == pytest.approx(0.2, abs=1e-15)


def test_rbp_requires_binary():
    with pytest.raises(ValidationError, match="binary"):
        rbp(["a"], {"a": 2.0}, SHIFTED)


def test_rbp_truncates_at_depth():
    m = BrowsingModel(0.5, "classic", depth=1)
    assert rbp(["a", "b"], {"b": 1}, m) == 0.0


def test_ndcg_examples():
    assert ndcg(["a", "b"], {"a": 1}) == 1.0
    assert ndcg(["b", "a"], {"a": 1}) == pytest.approx(1 / math.log2(3), abs=1e-15)
    assert ndcg(["a"], {}) == 0.0
    assert ndcg(["a", "b"], {"a": 1, "b": 3}) == pytest.approx(brute_ndcg(["a", "b"], {"a": 1, "b": 3}), abs=1e-15)


def test_mrr_and_hr_examples():
    assert mrr(["a", "b"], {"a": 1}) == 1.0
    assert mrr(["x", "y", "z", "a"], {"a": 1}) == 0.25
    assert mrr(["x", "a"], {"a": 1}, depth=1) == 0.0
    items = [f"i{j}" for j in range(1, 21)]
    assert hit_rate(items, {"i10": 1}, 10) == 1.0
    assert hit_rate(items, {"i11": 1}, 10) == 0.0
    assert hit_rate(items, {}, 10) == 0.0


def test_metric_ids_and_parsing():
    assert [s.id for s in parse_metrics(["rbp", "rbp(0.5)", "ndcg", "mrr", "hr", "hr@10"], 0.8)] == \
        ["rbp(0.8)", "rbp(0.5)", "ndcg", "mrr", "hr", "hr@10"]
    for bad in ["rbp(1.2)", "hr@0", "map"]:
        with pytest.raises(ValidationError):
            MetricSpec.parse(bad)
    with pytest.raises(ValidationError):
        parse_metrics(["rbp", "rbp(0.8)"], 0.8)


@pytest.mark.parametrize("kwargs", [dict(gamma=0), dict(gamma=1), dict(convention="x"), dict(depth=0)])
def test_browsing_model_validation(kwargs):
    with pytest.raises(ValidationError):
        BrowsingModel(**kwargs)


def test_convention_identity_is_exact():
    for items, truth in random_pairs(5, 300):
        for g in (0.3, 0.5, 0.8, 0.95):
            p = rbp(items, truth, BrowsingModel(g, "shifted"))
            c = rbp(items, truth, BrowsingModel(g, "classic"))
            assert p == g * c


@pytest.mark.parametrize("gamma", [0.1, 0.5, 0.8, 0.9])
def test_all_relevant_limits(gamma):
    items = [f"i{j}" for j in range(1000)]
    truth = dict.fromkeys(items, 1)
    assert rbp(items, truth, BrowsingModel(gamma, "shifted")) == pytest.approx(gamma, abs=1e-12)
    assert rbp(items, truth, BrowsingModel(gamma, "classic")) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 30), st.data())
def test_promoting_relevant_item_never_hurts(n, data):
    items = [f"i{j}" for j in range(n)]
    rel = data.draw(st.sets(st.sampled_from(items), min_size=1))
    truth = dict.fromkeys(rel, 1)
    src = data.draw(st.sampled_from([j for j, it in enumerate(items) if it in rel]))
    dst = data.draw(st.integers(0, src))
    better = list(items)
    better.insert(dst, better.pop(src))
    for f in (lambda L: rbp(L, truth, SHIFTED), lambda L: ndcg(L, truth), lambda L: mrr(L, truth)):
        assert f(better) >= f(items) - 1e-15
        assert 0.0 <= f(better) <= 1.0


def _frame_fixture(seed=3, n_req=10):
    rng = np.random.default_rng(seed)
    truth, runs = {}, {}
    reqs = [f"u{j}" for j in range(n_req)]
    for q in reqs:
        for j in rng.choice(40, size=int(rng.integers(0, 6)), replace=False):
            truth[(q, f"i{j}")] = 1.0
        truth.setdefault((q, "i999"), 0.0)
    for s in ("A", "B"):
        lists = {}
        for q in reqs:
            if s == "B" and q == "u3":
                continue
            lists[q] = tuple(f"i{j}" for j in rng.choice(40, size=int(rng.integers(1, 30)), replace=False))
        runs[s] = Run(s, lists)
    return runs, TruthSet(truth)


def test_frame_matches_per_request_oracle():
    runs, truth = _frame_fixture()
    model = BrowsingModel(0.8, "shifted", depth=25)
    frame = evaluate(runs, truth, ["rbp", "ndcg", "mrr", "hr", "hr@10"], model)
    assert frame.missing == {"A": (), "B": ("u3",)}
    for si, s in enumerate(frame.systems):
        for qi, q in enumerate(frame.requests):
            items = list(runs[s].requests.get(q, ()))
            t = truth.for_request(q)
            expect = [brute_rbp(items, t, 0.8, 25), brute_ndcg(items, t, 25), brute_mrr(items, t, 25),
                      brute_hr(items, t, 25), brute_hr(items, t, 10)]
            np.testing.assert_allclose(frame.values[si, :, qi], expect, rtol=0, atol=1e-12)
    assert np.all(frame.values[1, :, frame.requests.index("u3")] == 0.0)


def test_frame_composition_and_identical_systems():
    run = Run("A", {"u": ("a", "b")})
    truth = TruthSet({("u", "a"): 1.0})
    frame = evaluate([run], truth, ["rbp"], SHIFTED)
    assert frame.values.shape == (1, 1, 1)
    assert frame.values[0, 0, 0] == rbp(["a", "b"], {"a": 1}, SHIFTED)
    twin = evaluate([run, run.with_system_id("B")], truth, ["rbp", "ndcg"], SHIFTED)
    assert np.array_equal(twin.column("A", "rbp(0.8)"), twin.column("B", "rbp(0.8)"))


def test_frame_is_request_order_independent():
    runs, truth = _frame_fixture(7, 12)
    frame = evaluate(runs, truth, ["rbp", "ndcg"])
    shuffled = {s: Run(s, dict(reversed(list(r.requests.items())))) for s, r in runs.items()}
    assert np.array_equal(frame.values, evaluate(shuffled, truth, ["rbp", "ndcg"]).values)


def test_frame_errors_and_csv():
    runs, truth = _frame_fixture()
    with pytest.raises(ValidationError, match="empty"):
        evaluate({}, truth)
    with pytest.raises(ValidationError, match="absent from truth"):
        evaluate([Run("X", {"zz": ("a",)})], truth)
    frame = evaluate(runs, truth, ["rbp", "mrr"])
    text = frame.to_csv()
    assert text.splitlines()[0] == "system_id,metric_id,request_id,value"
    back = MetricFrame.from_csv(text)
    assert np.array_equal(back.values, frame.values)
    assert back.systems == frame.systems and back.requests == frame.requests
