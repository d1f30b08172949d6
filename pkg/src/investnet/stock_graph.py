"""Daily stock co-mention graphs and relatedness-weighted feature averages."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from datetime import date
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ingest import Tweet, TradingCalendar


@dataclass(frozen=True)
class StockGraph:
    """Undirected co-mention graph; ``weights`` keys are sorted symbol pairs.

    Only edges surviving the minimum-count filter are stored. The self weight is
    implicitly 1 for every node.
    """

    day: date
    nodes: frozenset[str]
    weights: Mapping[tuple[str, str], int]
    neighbors: Mapping[str, Mapping[str, int]]

    def weight(self, a: str, b: str) -> int:
        if a == b:
            return 1 if a in self.nodes else 0
        return self.neighbors.get(a, {}).get(b, 0)


def pair_counts(tweets: Iterable[Tweet]) -> Counter:
    counts: Counter = Counter()
    for t in tweets:
        for a, b in combinations(sorted(set(t.tickers)), 2):
            counts[(a, b)] += 1
    return counts


def build_stock_graph(tweets_by_day: Mapping[date, Sequence[Tweet]], day: date, cal: TradingCalendar,
                      window: int = 3, min_weight: int = 2) -> StockGraph:
    """Co-mention graph over the ``window`` trading days ending at ``day``."""
    if window < 1:
        raise ValueError("window must be >= 1")
    window_tweets = [t for d in cal.window(day, window) for t in tweets_by_day.get(d, ())]
    return _from_tweets(day, window_tweets, min_weight)


def _from_tweets(day, tweets, min_weight):
    raw = pair_counts(tweets)
    nodes = frozenset(s for t in tweets for s in t.tickers)
    kept = {pair: n for pair, n in raw.items() if n >= min_weight}
    nbrs: dict[str, dict[str, int]] = {}
    for (a, b), n in kept.items():
        nbrs.setdefault(a, {})[b] = n
        nbrs.setdefault(b, {})[a] = n
    return StockGraph(day, nodes, kept, nbrs)


def relatedness_feature(graph: StockGraph, stock: str, f: Mapping[str, float | None]) -> float | None:
    """Co-mention-weighted average of ``f`` over ``stock`` and its neighbours.

    Stocks without a value for ``f`` drop out of numerator and denominator.
    Returns None when ``stock`` itself has no value.
    """
    own = f.get(stock)
    if own is None:
        return None
    num, den = float(own), 1.0
    for k, r in graph.neighbors.get(stock, {}).items():
        fk = f.get(k)
        if fk is not None:
            num += r * fk
            den += r
    return num / den


def top_cooccurring(graph: StockGraph, stock: str, k: int = 5) -> list[tuple[str, int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if stock not in graph.nodes:
        raise KeyError(f"unknown stock {stock!r} on {graph.day}")
    ranked = sorted(graph.neighbors.get(stock, {}).items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def cumulative_cooccurrence(tweets: Iterable[Tweet], min_weight: int = 1) -> StockGraph:
    """Whole-period co-mention graph, used for descriptive top-k tables."""
    return _from_tweets(date.min, list(tweets), min_weight)


def write_edge_dump(graphs: Mapping[date, StockGraph], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("day,stock_a,stock_b,weight\n")
        for day in sorted(graphs):
            for (a, b), n in sorted(graphs[day].weights.items()):
                fh.write(f"{day.isoformat()},{a},{b},{n}\n")
