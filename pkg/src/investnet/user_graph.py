"""Daily forwarding graphs and PageRank user weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import Tweet

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.85
# near-undamped setting approximating the plain PR(u) = sum PR(v)/L(v) recursion
NEAR_UNDAMPED = 0.999


@dataclass
class UserGraph:
    """Directed forwarder -> original-author graph for one trading day."""

    day: date
    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], int]
    missing_parents: int = 0
    pagerank: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    def __len__(self):
        return len(self.nodes)

    @property
    def min_score(self) -> float | None:
        return min(self.pagerank.values()) if self.pagerank else None


def build_user_graph(tweets: Iterable[Tweet], day: date, lookup: Mapping[str, Tweet] | None = None) -> UserGraph:
    """Build the forwarding graph from the tweets attributed to ``day``.

    ``lookup`` resolves parent tweets (which may belong to an earlier day); it
    defaults to the day's own tweets. Edge values count forwards; PageRank
    ignores them unless run in weighted mode.
    """
    tweets = list(tweets)
    if lookup is None:
        lookup = {t.tweet_id: t for t in tweets}
    edges: dict[tuple[str, str], int] = {}
    missing = 0
    for t in tweets:
        if t.parent_tweet_id is None:
            continue
        parent = lookup.get(t.parent_tweet_id)
        if parent is None:
            missing += 1
            continue
        if parent.author_id == t.author_id:
            continue
        key = (t.author_id, parent.author_id)
        edges[key] = edges.get(key, 0) + 1
    nodes = tuple(sorted({u for e in edges for u in e}))
    if missing:
        logger.debug("%s: %d forward(s) with unknown parent skipped", day, missing)
    return UserGraph(day, nodes, edges, missing)


def pagerank(graph: UserGraph, damping: float = DEFAULT_DAMPING, tol: float = 1e-10,
             max_iter: int = 200, weighted: bool = False) -> dict[str, float]:
    """Damped PageRank by power iteration, stored on ``graph`` and returned.

    Each round sets ``PR(t) = (1-d)/N + d * (sum_{i->t} PR(i)/L(i) + dangling/N)``
    where ``dangling`` is the mass on nodes with no out-links. Starts uniform and
    stops once the L1 change drops below ``tol``.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    n = len(graph.nodes)
    if n == 0:
        raise ValueError(f"cannot rank an empty graph ({graph.day})")
    index = {u: i for i, u in enumerate(graph.nodes)}
    src = np.fromiter((index[a] for a, _ in graph.edges), dtype=np.int64, count=len(graph.edges))
    dst = np.fromiter((index[b] for _, b in graph.edges), dtype=np.int64, count=len(graph.edges))
    w = np.fromiter(graph.edges.values(), dtype=float, count=len(graph.edges)) if weighted \
        else np.ones(len(graph.edges))
    out_w = np.bincount(src, weights=w, minlength=n)
    dangling = out_w == 0
    coef = w / out_w[src]

    pr = np.full(n, 1.0 / n)
    it = 0
    for it in range(1, max_iter + 1):
        flow = np.bincount(dst, weights=pr[src] * coef, minlength=n)
        new = (1.0 - damping) / n + damping * (flow + pr[dangling].sum() / n)
        new /= new.sum()
        delta = np.abs(new - pr).sum()
        pr = new
        if delta < tol:
            break
    graph.pagerank = dict(zip(graph.nodes, pr.tolist()))
    graph.iterations = it
    return graph.pagerank


def user_weight(graph: UserGraph, user_id: str, empty_weight: float = 1.0) -> float:
    """PageRank of ``user_id``; users outside the day's graph get its minimum score.

    On a day with no forwarding edges at all every author gets ``empty_weight``.
    """
    if not graph.pagerank:
        if graph.nodes:
            raise ValueError("graph has not been ranked")
        return empty_weight
    score = graph.pagerank.get(user_id)
    return graph.min_score if score is None else score


def rank_daily_graphs(tweets_by_day: Mapping[date, Sequence[Tweet]], lookup: Mapping[str, Tweet],
                      damping: float = DEFAULT_DAMPING, tol: float = 1e-10, max_iter: int = 200,
                      weighted: bool = False) -> dict[date, UserGraph]:
    graphs = {}
    for day, day_tweets in tweets_by_day.items():
        g = build_user_graph(day_tweets, day, lookup)
        if g.nodes:
            pagerank(g, damping, tol, max_iter, weighted)
        graphs[day] = g
    return graphs


def write_graph_dump(graphs: Mapping[date, UserGraph], edge_path, score_path) -> None:
    with Path(edge_path).open("w", encoding="utf-8") as fe, Path(score_path).open("w", encoding="utf-8") as fs:
        fe.write("day,src,dst\n")
        fs.write("day,user,score\n")
        for day in sorted(graphs):
            g = graphs[day]
            for a, b in sorted(g.edges):
                fe.write(f"{day.isoformat()},{a},{b}\n")
            for u in g.nodes:
                fs.write(f"{day.isoformat()},{u},{g.pagerank[u]!r}\n")
