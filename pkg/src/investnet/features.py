"""Per-(stock, trading day) feature vectors and next-day movement labels."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import astuple, dataclass, fields
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import PriceBar, Tweet, TradingCalendar
from .stock_graph import StockGraph, relatedness_feature
from .text import Sentiment
from .user_graph import UserGraph, user_weight

logger = logging.getLogger(__name__)

MA_WINDOW = 5
# bars needed up to and including day j: MA5 at j-1 reaches back to j-5
WARMUP_BARS = MA_WINDOW + 1


@dataclass(frozen=True)
class FeatureVector:
    price_change_rate: float
    ma5_change_rate: float
    turnover_change_rate: float
    volume_change_rate: float
    volume_ma5: float
    pe_ratio: float | None
    sentiment_score: float
    sentiment_missing: bool
    pos_count: int
    neg_count: int
    neu_count: int
    corr_turnover: float | None
    corr_price_change: float | None
    corr_ma5: float | None


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))

FEATURE_GROUPS = {
    "stock": ("price_change_rate", "ma5_change_rate", "turnover_change_rate", "volume_change_rate",
              "volume_ma5", "pe_ratio"),
    "sentiment": ("sentiment_score", "sentiment_missing", "pos_count", "neg_count", "neu_count"),
    "relatedness": ("corr_turnover", "corr_price_change", "corr_ma5"),
}


@dataclass(frozen=True)
class Sample:
    stock_id: str
    day: date
    features: FeatureVector
    label: int  # +1 up next session, -1 otherwise


# -- sentiment --------------------------------------------------------------------


def sentiment_counts(tweets: Iterable[Tweet], labels: Mapping[str, Sentiment],
                     graph: UserGraph) -> tuple[float, float]:
    """PageRank-weighted positive and negative tweet totals; neutral tweets ignored."""
    pos = neg = 0.0
    for t in tweets:
        lab = labels[t.tweet_id]
        if lab is Sentiment.POSITIVE:
            pos += user_weight(graph, t.author_id)
        elif lab is Sentiment.NEGATIVE:
            neg += user_weight(graph, t.author_id)
    return pos, neg


def sentiment_score(positive: float, negative: float) -> tuple[float, bool]:
    """Positive share of the weighted counts; ``(0.5, True)`` when both are zero."""
    if positive < 0 or negative < 0:
        raise ValueError("counts must be non-negative")
    total = positive + negative
    if total == 0:
        return 0.5, True
    return positive / total, False


def market_sentiment_index(positive: Sequence[float], negative: Sequence[float],
                           flip_sign: bool = False) -> np.ndarray:
    """Daily market index ``0.5 - a/(a+b)`` with a, b the day's share of all positive/negative tweets.

    As written the index falls on positive-heavy days; ``flip_sign`` negates it.
    A day with no tweets of either polarity gets 0.
    """
    p = np.asarray(positive, dtype=float)
    n = np.asarray(negative, dtype=float)
    if p.shape != n.shape:
        raise ValueError("positive and negative series differ in length")
    if p.sum() <= 0 or n.sum() <= 0:
        raise ValueError("positive and negative totals must both be > 0")
    a = p / p.sum()
    b = n / n.sum()
    den = a + b
    share = np.divide(a, den, out=np.full_like(a, 0.5), where=den > 0)
    s = 0.5 - share
    return -s if flip_sign else s


# -- stock-specific ---------------------------------------------------------------


def _change(prev: float, cur: float) -> float:
    # zero previous level (suspension, empty volume) counts as no change
    return (cur - prev) / prev if prev > 0 else 0.0


def stock_specific_features(bars: Sequence[PriceBar], j: int | None = None) -> dict | None:
    """Change-rate features for bar ``j`` (default: the last) of one stock's series.

    Returns None when fewer than ``WARMUP_BARS`` bars end at ``j``.
    """
    if j is None:
        j = len(bars) - 1
    if j < WARMUP_BARS - 1:
        return None
    b = bars[j - WARMUP_BARS + 1: j + 1]
    closes = [x.close for x in b]
    ma_now = sum(closes[1:]) / MA_WINDOW
    ma_prev = sum(closes[:-1]) / MA_WINDOW
    vol_changes = [_change(b[i - 1].volume, b[i].volume) for i in range(1, len(b))]
    return {
        "price_change_rate": _change(closes[-2], closes[-1]),
        "ma5_change_rate": _change(ma_prev, ma_now),
        "turnover_change_rate": _change(b[-2].turnover_rate, b[-1].turnover_rate),
        "volume_change_rate": vol_changes[-1],
        "volume_ma5": sum(vol_changes) / MA_WINDOW,
        "pe_ratio": b[-1].pe_ratio,
    }


# -- targets and assembly ---------------------------------------------------------


def bars_by_stock(bars: Iterable[PriceBar]) -> dict[str, list[PriceBar]]:
    out: dict[str, list[PriceBar]] = defaultdict(list)
    for b in bars:
        out[b.stock_id].append(b)
    for series in out.values():
        series.sort(key=lambda x: x.date)
    return dict(out)


def mention_counts(tweets_by_day: Mapping[date, Sequence[Tweet]]) -> dict[date, Counter]:
    return {d: Counter(s for t in ts for s in t.tickers) for d, ts in tweets_by_day.items()}


def select_target_stocks(series: Mapping[str, Sequence[PriceBar]], tweets_by_day: Mapping[date, Sequence[Tweet]],
                         min_days: int = 10, min_daily_tweets: float = 10.0) -> set[str]:
    """Stocks with more than ``min_days`` trading days and more than ``min_daily_tweets`` tweets per day."""
    totals: Counter = Counter()
    for ts in tweets_by_day.values():
        for t in ts:
            totals.update(t.tickers)
    out = set()
    for stock, bars in series.items():
        n_days = len(bars)
        if n_days > min_days and totals[stock] / n_days > min_daily_tweets:
            out.add(stock)
    return out


@dataclass
class AssemblyStats:
    skipped_warmup: int = 0
    skipped_no_next: int = 0


def assemble_samples(series: Mapping[str, Sequence[PriceBar]], tweets_by_day: Mapping[date, Sequence[Tweet]],
                     labels: Mapping[str, Sentiment], user_graphs: Mapping[date, UserGraph],
                     stock_graphs: Mapping[date, StockGraph], cal: TradingCalendar,
                     targets: Iterable[str], stats: AssemblyStats | None = None) -> list[Sample]:
    """One sample per target stock and trading day that has warm-up history and a next bar."""
    stats = stats if stats is not None else AssemblyStats()
    targets = sorted(set(targets))

    # cross-section of stock-specific features per day, for relatedness averages
    daily: dict[date, dict[str, dict]] = defaultdict(dict)
    position: dict[str, dict[date, int]] = {}
    for stock, bars in series.items():
        position[stock] = {b.date: i for i, b in enumerate(bars)}
        for i in range(WARMUP_BARS - 1, len(bars)):
            daily[bars[i].date][stock] = stock_specific_features(bars, i)

    by_stock_day: dict[date, dict[str, list[Tweet]]] = {}
    for d, ts in tweets_by_day.items():
        bucket: dict[str, list[Tweet]] = defaultdict(list)
        for t in ts:
            for s in t.tickers:
                bucket[s].append(t)
        by_stock_day[d] = bucket

    samples = []
    for stock in targets:
        bars = series.get(stock, [])
        for i, bar in enumerate(bars):
            if i < WARMUP_BARS - 1:
                stats.skipped_warmup += 1
                continue
            if i + 1 >= len(bars):
                stats.skipped_no_next += 1
                continue
            d = bar.date
            own = daily[d][stock]
            day_tweets = by_stock_day.get(d, {}).get(stock, [])
            graph = user_graphs.get(d) or UserGraph(d, (), {})
            pos_w, neg_w = sentiment_counts(day_tweets, labels, graph)
            sc, sc_missing = sentiment_score(pos_w, neg_w)
            raw = Counter(labels[t.tweet_id] for t in day_tweets)
            sg = stock_graphs.get(d)
            cross = daily[d]

            def corr(name):
                f = {k: v[name] for k, v in cross.items()}
                if sg is None:
                    return f.get(stock)
                return relatedness_feature(sg, stock, f)

            fv = FeatureVector(
                price_change_rate=own["price_change_rate"],
                ma5_change_rate=own["ma5_change_rate"],
                turnover_change_rate=own["turnover_change_rate"],
                volume_change_rate=own["volume_change_rate"],
                volume_ma5=own["volume_ma5"],
                pe_ratio=own["pe_ratio"],
                sentiment_score=sc,
                sentiment_missing=sc_missing,
                pos_count=raw[Sentiment.POSITIVE],
                neg_count=raw[Sentiment.NEGATIVE],
                neu_count=raw[Sentiment.NEUTRAL],
                corr_turnover=corr("turnover_change_rate"),
                corr_price_change=corr("price_change_rate"),
                corr_ma5=corr("ma5_change_rate"),
            )
            samples.append(Sample(stock, d, fv, movement_label(bar.close, bars[i + 1].close)))
    samples.sort(key=lambda s: (s.day, s.stock_id))
    return samples


def movement_label(close_today: float, close_next: float) -> int:
    """+1 if the next close is strictly higher, otherwise -1 (unchanged included)."""
    return 1 if close_next > close_today else -1


# -- sample file ------------------------------------------------------------------

SAMPLE_COLUMNS = ("stock_id", "date", *FEATURE_NAMES, "label")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_samples(samples: Iterable[Sample], path, seed: int | None = None) -> None:
    """CSV with a ``#`` header line (format version and seed); labels serialized as 1 (up) / 0 (otherwise)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# investnet samples v1 seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            w.writerow([s.stock_id, s.day.isoformat(), *(_cell(v) for v in astuple(s.features)),
                        "1" if s.label == 1 else "0"])


_INT_FIELDS = {"pos_count", "neg_count", "neu_count"}


def read_samples(path) -> list[Sample]:
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None:
            return out
        if tuple(header) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected sample columns")
        for row in rows:
            rec = dict(zip(header, row))
            vals = {}
            for name in FEATURE_NAMES:
                cell = rec[name]
                if name == "sentiment_missing":
                    vals[name] = cell == "1"
                elif name in _INT_FIELDS:
                    vals[name] = int(cell)
                else:
                    vals[name] = None if cell == "" else float(cell)
            out.append(Sample(rec["stock_id"], date.fromisoformat(rec["date"]), FeatureVector(**vals),
                              1 if rec["label"] == "1" else -1))
    return out


def feature_columns(groups: Iterable[str]) -> tuple[str, ...]:
    groups = set(groups)
    unknown = groups - FEATURE_GROUPS.keys()
    if unknown:
        raise ValueError(f"unknown feature group(s): {', '.join(sorted(unknown))}")
    if not groups:
        raise ValueError("empty feature group set")
    return tuple(c for g in FEATURE_GROUPS if g in groups for c in FEATURE_GROUPS[g])


def to_matrix(samples: Sequence[Sample], columns: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (NaN for missing values) and labels in {+1, -1}."""
    X = np.empty((len(samples), len(columns)))
    for i, s in enumerate(samples):
        for c, name in enumerate(columns):
            v = getattr(s.features, name)
            X[i, c] = math.nan if v is None else float(v)
    y = np.array([s.label for s in samples], dtype=float)
    return X, y
