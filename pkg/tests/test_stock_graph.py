from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from conftest import tweet, weekdays
from investnet.ingest import TradingCalendar
from investnet.stock_graph import (StockGraph, build_stock_graph, cumulative_cooccurrence, pair_counts,
                                   relatedness_feature, top_cooccurring, write_edge_dump)

DAYS = weekdays(date(2014, 11, 3), 6)
CAL = TradingCalendar(DAYS)


def _graph(tweets, day=DAYS[0], window=3, min_weight=2):
    return build_stock_graph({day: tweets}, day, CAL, window, min_weight)


def _manual(weights, nodes=None):
    nbrs = {}
    for (a, b), n in weights.items():
        nbrs.setdefault(a, {})[b] = n
        nbrs.setdefault(b, {})[a] = n
    nodes = frozenset(nodes or {s for p in weights for s in p})
    return StockGraph(DAYS[0], nodes, dict(weights), nbrs)


def test_two_comentions_kept():
    g = _graph([tweet("1", tickers="AB"), tweet("2", tickers="AB")])
    assert g.weight("A", "B") == 2 and g.weight("B", "A") == 2


def test_single_comention_dropped():
    g = _graph([tweet("1", tickers="AB")])
    assert g.weight("A", "B") == 0 and "A" in g.nodes


def test_triple_mention_pairs():
    assert pair_counts([tweet("1", tickers="ABC")]) == {("A", "B"): 1, ("A", "C"): 1, ("B", "C"): 1}


def test_window_counts_trading_days():
    by_day = {DAYS[0]: [tweet("1", tickers="AB")], DAYS[2]: [tweet("2", tickers="AB")],
              DAYS[3]: [tweet("3", tickers="AB")]}
    assert build_stock_graph(by_day, DAYS[2], CAL, 3).weight("A", "B") == 2
    assert build_stock_graph(by_day, DAYS[3], CAL, 3).weight("A", "B") == 2  # DAYS[0] fell out
    assert build_stock_graph(by_day, DAYS[3], CAL, 4).weight("A", "B") == 3


def test_isolated_stock_identity():
    g = _graph([tweet("1", tickers="A")])
    assert relatedness_feature(g, "A", {"A": 0.03}) == 0.03


def test_one_neighbor_hand_computed():
    g = _manual({("A", "K"): 3})
    assert relatedness_feature(g, "A", {"A": 0.0, "K": 0.04}) == pytest.approx(0.03, abs=1e-15)


def test_missing_values_excluded():
    g = _manual({("A", "K"): 3, ("A", "M"): 2})
    # M has no value: only self and K count
    assert relatedness_feature(g, "A", {"A": 0.0, "K": 0.04, "M": None}) == pytest.approx(0.03, abs=1e-15)
    assert relatedness_feature(g, "A", {"K": 0.04}) is None


def test_top_k():
    g = _manual({("A", "B"): 5, ("A", "C"): 3})
    assert top_cooccurring(g, "A", 1) == [("B", 5)]
    tie = _manual({("A", "C"): 5, ("A", "B"): 5})
    assert top_cooccurring(tie, "A", 2) == [("B", 5), ("C", 5)]
    iso = _manual({}, nodes={"Z"})
    assert top_cooccurring(iso, "Z") == []
    with pytest.raises(KeyError):
        top_cooccurring(iso, "nope")


def test_cumulative_and_dump(tmp_path):
    g = cumulative_cooccurrence([tweet("1", tickers="AB"), tweet("2", tickers="BC")])
    assert g.weight("A", "B") == 1 and g.weight("B", "C") == 1
    graphs = {DAYS[0]: _graph([tweet("1", tickers="AB"), tweet("2", tickers="AB")])}
    write_edge_dump(graphs, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "day,stock_a,stock_b,weight\n2014-11-03,A,B,2\n"


symbols = st.sampled_from(list("ABCDEFG"))
mention_sets = st.lists(st.lists(symbols, min_size=1, max_size=4, unique=True), max_size=25)


@settings(max_examples=100, deadline=None)
@given(mention_sets, st.integers(1, 3))
def test_symmetry_after_filter(mentions, min_weight):
    g = _graph([tweet(str(i), tickers=m) for i, m in enumerate(mentions)], min_weight=min_weight)
    for a in g.nodes:
        for b in g.nodes:
            assert g.weight(a, b) == g.weight(b, a)
    assert all(n >= min_weight for n in g.weights.values())


@settings(max_examples=100, deadline=None)
@given(mention_sets, st.lists(st.floats(-1, 1), min_size=7, max_size=7), st.floats(-5, 5), st.floats(-5, 5))
def test_affine_equivariance(mentions, vals, a, b):
    g = _graph([tweet(str(i), tickers=m) for i, m in enumerate(mentions)], min_weight=1)
    f = dict(zip("ABCDEFG", vals))
    g_f = {k: a * v + b for k, v in f.items()}
    for s in g.nodes:
        r = relatedness_feature(g, s, f)
        assert relatedness_feature(g, s, g_f) == pytest.approx(a * r + b, abs=1e-9)
        if not g.neighbors.get(s):
            assert r == f[s]


@settings(max_examples=100, deadline=None)
@given(st.lists(mention_sets, min_size=6, max_size=6), st.integers(1, 5))
def test_window_monotone(per_day, window):
    by_day = {d: [tweet(f"{d}-{i}", tickers=m) for i, m in enumerate(ms)] for d, ms in zip(DAYS, per_day)}
    day = DAYS[-1]
    small = pair_counts(t for d in CAL.window(day, window) for t in by_day[d])
    large = pair_counts(t for d in CAL.window(day, window + 1) for t in by_day[d])
    assert all(large[p] >= n for p, n in small.items())
