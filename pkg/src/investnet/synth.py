"""Synthetic investor-forum datasets with planted, controllable signal.

Stocks are grouped into blocks. Each block carries a daily sentiment bias;
tweets about its stocks lean toward that bias, and the next session's price
move follows it with probability ``sentiment_signal``. With the default
signal of 0.5 the tweets carry no information about future prices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .ingest import PriceBar, Tweet, TradingCalendar, User, write_prices, write_tweets, write_users

logger = logging.getLogger(__name__)

POSITIVE_WORDS = ("bullish", "buy", "rally", "upside", "breakout", "strong", "gain", "outperform", "undervalued",
                  "accumulate", "surge", "beat", "upgrade", "momentum", "long", "rebound", "growth", "moon",
                  "profit", "soar")
NEGATIVE_WORDS = ("bearish", "sell", "crash", "downside", "breakdown", "weak", "loss", "underperform",
                  "overvalued", "dump", "plunge", "miss", "downgrade", "fade", "short", "slump", "decline",
                  "panic", "warning", "sink")
NEUTRAL_WORDS = ("today", "market", "session", "watching", "shares", "chart", "volume", "earnings", "report",
                 "sector", "index", "news", "analysts", "price", "week", "quarter", "trading", "close", "open",
                 "board", "policy", "fund", "investors", "update", "guidance", "holding", "position", "outlook",
                 "data", "note")
SPAM_WORDS = ("free", "tips", "join", "group", "vip", "guaranteed", "signals", "click", "limited", "offer")

FILES = ("users.jsonl", "tweets.jsonl", "prices.csv", "sentiment_corpus.tsv", "spam_labels.tsv")


@dataclass
class SynthConfig:
    n_stocks: int = 50
    n_users: int = 3000
    n_days: int = 120
    start_date: str = "2014-11-03"
    follower_exponent: float = 0.624
    tweets_per_stock_day: float = 14.0
    sentiment_signal: float = 0.5
    polarity: float = 0.7          # share of polar tweets agreeing with the day's block bias
    neutral_rate: float = 0.25
    block_size: int = 5
    co_mention_rate: float = 0.25  # originals that also name 1-2 block peers
    cross_mention_rate: float = 0.02  # originals that also name a stock outside the block
    forward_rate: float = 0.3
    spam_rate: float = 0.05        # spam tweets per regular tweet
    spammer_rate: float = 0.03     # share of users who post spam
    ticker_spam_rate: float = 0.01
    daily_volatility: float = 0.02
    block_shock_share: float = 0.5
    missing_pe_rate: float = 0.1
    corpus_per_class: int = 300
    spam_labels: int = 2000
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_stocks", "n_users", "n_days", "block_size", "corpus_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("sentiment_signal", "polarity", "neutral_rate", "co_mention_rate", "cross_mention_rate",
                     "forward_rate", "spam_rate", "spammer_rate", "ticker_spam_rate", "block_shock_share",
                     "missing_pe_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.follower_exponent <= 0:
            raise ValueError("follower_exponent must be > 0")
        if self.tweets_per_stock_day < 0 or self.daily_volatility <= 0:
            raise ValueError("tweet intensity must be >= 0 and volatility > 0")


def discrete_power_law(rng: np.random.Generator, exponent: float, size: int, cap: int = 10**9) -> np.ndarray:
    """Integers with P(X >= k) = k^-exponent for k >= 1 (floor of a Pareto draw)."""
    u = 1.0 - rng.random(size)  # (0, 1]
    x = np.floor(u ** (-1.0 / exponent))
    return np.minimum(x, cap).astype(np.int64)


def weekday_calendar(start: date, n_days: int) -> TradingCalendar:
    days, d = [], start
    while len(days) < n_days:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return TradingCalendar(tuple(days))


def stock_symbols(n: int) -> list[str]:
    return [f"SH{600000 + k:06d}" for k in range(n)]


def cashtag(symbol: str) -> str:
    return f"$S{symbol[2:]}({symbol})$"


def _words(rng, pool, lo, hi):
    return list(rng.choice(pool, size=int(rng.integers(lo, hi + 1))))


def sentiment_text(rng: np.random.Generator, label: str) -> str:
    if label == "positive":
        words = _words(rng, POSITIVE_WORDS, 2, 4) + _words(rng, NEUTRAL_WORDS, 1, 3)
    elif label == "negative":
        words = _words(rng, NEGATIVE_WORDS, 2, 4) + _words(rng, NEUTRAL_WORDS, 1, 3)
    else:
        words = _words(rng, NEUTRAL_WORDS, 3, 5)
    if label != "neutral" and rng.random() < 0.1:
        words += _words(rng, NEGATIVE_WORDS if label == "positive" else POSITIVE_WORDS, 1, 1)
    rng.shuffle(words)
    return " ".join(words)


def generate(config: SynthConfig, outdir) -> dict:
    """Write the five dataset files to ``outdir`` and return summary counts."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    cal = weekday_calendar(date.fromisoformat(config.start_date), config.n_days)
    symbols = stock_symbols(config.n_stocks)
    block = np.arange(config.n_stocks) // config.block_size
    n_blocks = int(block.max()) + 1
    members = [np.flatnonzero(block == g) for g in range(n_blocks)]

    # users: power-law followers; a small share of them post spam
    followers = discrete_power_law(rng, config.follower_exponent, config.n_users)
    spammer = rng.random(config.n_users) < config.spammer_rate
    if config.spammer_rate > 0 and config.n_users > 1 and not spammer.any():
        spammer[int(rng.integers(config.n_users))] = True
    user_ids = [f"u{k:06d}" for k in range(config.n_users)]
    honest = np.flatnonzero(~spammer)
    if len(honest) == 0:
        raise ValueError("configuration leaves no regular users")
    spam_users = np.flatnonzero(spammer)
    author_w = np.log(2.0 + followers[honest].astype(float))
    author_w /= author_w.sum()

    # daily block bias and prices
    bias = rng.choice([-1, 1], size=(n_blocks, config.n_days))
    sig = config.daily_volatility
    shock_b = rng.normal(size=(n_blocks, config.n_days)) * sig * math.sqrt(config.block_shock_share)
    shock_e = rng.normal(size=(config.n_stocks, config.n_days)) * sig * math.sqrt(1 - config.block_shock_share)
    close0 = rng.uniform(5.0, 50.0, size=config.n_stocks)
    float_shares = rng.uniform(2e8, 2e9, size=config.n_stocks)
    base_turnover = rng.uniform(0.005, 0.05, size=config.n_stocks)
    eps = rng.uniform(0.2, 2.0, size=config.n_stocks)
    no_pe = rng.random(config.n_stocks) < config.missing_pe_rate
    bars = []
    for i, sym in enumerate(symbols):
        close = close0[i]
        for j, d in enumerate(cal.dates):
            if j > 0:
                magnitude = abs(shock_b[block[i], j] + shock_e[i, j]) + 1e-4
                follow = rng.random() < config.sentiment_signal
                direction = bias[block[i], j - 1] if follow else -bias[block[i], j - 1]
                close = close * math.exp(direction * magnitude)
            turnover = min(1.0, base_turnover[i] * math.exp(rng.normal(0, 0.3)))
            volume = float(round(turnover * float_shares[i]))
            pe = None if no_pe[i] else round(close / eps[i], 4)
            bars.append(PriceBar(sym, d, round(close, 4), volume, round(turnover, 6), pe))

    # tweets
    drafts = []  # (timestamp, author_idx, text, tickers, parent_draft_idx)
    labels_true = {}
    day_open = [cal.close_timestamp(cal.dates[0]) - 86400] + [cal.close_timestamp(d) for d in cal.dates[:-1]]
    for j, d in enumerate(cal.dates):
        t0, t1 = day_open[j], cal.close_timestamp(d)
        for i, sym in enumerate(symbols):
            n = int(rng.poisson(config.tweets_per_stock_day))
            n_fwd = int(rng.binomial(n, config.forward_rate)) if n > 1 else 0
            n_orig = n - n_fwd
            origins = []
            b = bias[block[i], j]
            for _ in range(n_orig):
                u = rng.random()
                if u < config.neutral_rate:
                    label = "neutral"
                else:
                    agree = rng.random() < config.polarity
                    label = "positive" if (b > 0) == agree else "negative"
                tickers = [sym]
                if rng.random() < config.co_mention_rate and len(members[block[i]]) > 1:
                    peers = [k for k in members[block[i]] if k != i]
                    k = int(rng.integers(1, min(2, len(peers)) + 1))
                    tickers += [symbols[p] for p in rng.choice(peers, size=k, replace=False)]
                if rng.random() < config.cross_mention_rate and n_blocks > 1:
                    outside = np.flatnonzero(block != block[i])
                    tickers.append(symbols[int(rng.choice(outside))])
                ts = int(rng.integers(int(t0) + 1, int(t1) + 1))
                author = int(rng.choice(honest, p=author_w))
                text = " ".join(cashtag(s) for s in tickers) + " " + sentiment_text(rng, label)
                labels_true[len(drafts)] = 0
                origins.append(len(drafts))
                drafts.append((ts, author, text, tickers, None))
            if origins:
                pw = np.array([math.sqrt(1.0 + followers[drafts[o][1]]) for o in origins])
                pw /= pw.sum()
                for _ in range(n_fwd):
                    o = int(origins[int(rng.choice(len(origins), p=pw))])
                    pts, pauthor, ptext, ptickers, _ = drafts[o]
                    author = int(rng.choice(honest, p=author_w))
                    ts = int(rng.integers(pts, int(t1) + 1))
                    text = f"rt @{user_ids[pauthor]}: {ptext}"
                    labels_true[len(drafts)] = 0
                    drafts.append((ts, author, text, list(ptickers), o))
        # spam and ticker-list spam
        n_regular = config.n_stocks * config.tweets_per_stock_day
        if len(spam_users):
            template = None
            for _ in range(int(rng.poisson(n_regular * config.spam_rate))):
                if template is None or rng.random() < 0.7:
                    digits = "".join(str(v) for v in rng.integers(0, 10, size=int(rng.integers(6, 11))))
                    template = (f"{' '.join(_words(rng, SPAM_WORDS, 3, 5))} {' '.join(_words(rng, POSITIVE_WORDS, 1, 2))}"
                                f" qq{digits} http://x.example/{digits[:4]} !!!!!!")
                tickers = [symbols[k] for k in rng.choice(config.n_stocks, size=2, replace=False)]
                ts = int(rng.integers(int(t0) + 1, int(t1) + 1))
                labels_true[len(drafts)] = 1
                drafts.append((ts, int(rng.choice(spam_users)),
                               " ".join(cashtag(s) for s in tickers) + " " + template, tickers, None))
        for _ in range(int(rng.poisson(n_regular * config.ticker_spam_rate))):
            k = int(rng.integers(6, 9))
            tickers = [symbols[x] for x in rng.choice(config.n_stocks, size=min(k, config.n_stocks), replace=False)]
            ts = int(rng.integers(int(t0) + 1, int(t1) + 1))
            labels_true[len(drafts)] = 0
            drafts.append((ts, int(rng.choice(honest, p=author_w)), " ".join(cashtag(s) for s in tickers),
                           tickers, None))

    order = sorted(range(len(drafts)), key=lambda k: (drafts[k][0], k))
    new_id = {k: f"t{n:08d}" for n, k in enumerate(order)}
    tweets = []
    authored = np.zeros(config.n_users, dtype=np.int64)
    for k in order:
        ts, author, text, tickers, parent = drafts[k]
        authored[author] += 1
        tweets.append(Tweet(new_id[k], user_ids[author], ts, text, tuple(tickers),
                            None if parent is None else new_id[parent]))

    history = np.where(spammer, rng.poisson(3000, size=config.n_users), rng.poisson(200, size=config.n_users))
    users = [User(user_ids[k], int(followers[k]), int(authored[k] + history[k])) for k in range(config.n_users)]

    write_users(users, outdir / "users.jsonl")
    write_tweets(tweets, outdir / "tweets.jsonl")
    write_prices(sorted(bars, key=lambda b: (b.stock_id, b.date)), outdir / "prices.csv")

    with (outdir / "sentiment_corpus.tsv").open("w", encoding="utf-8") as fh:
        for n in range(config.corpus_per_class):
            for label in ("positive", "negative", "neutral"):
                fh.write(f"{label}\t{sentiment_text(rng, label)}\n")

    spam_idx = [k for k in order if labels_true[k] == 1]
    ham_idx = [k for k in order if labels_true[k] == 0]
    n_spam = min(len(spam_idx), config.spam_labels // 2)
    n_ham = min(len(ham_idx), config.spam_labels - n_spam)
    chosen = []
    if n_spam:
        chosen += [(1, spam_idx[k]) for k in rng.choice(len(spam_idx), size=n_spam, replace=False)]
    if n_ham:
        chosen += [(0, ham_idx[k]) for k in rng.choice(len(ham_idx), size=n_ham, replace=False)]
    chosen.sort(key=lambda lk: new_id[lk[1]])
    with (outdir / "spam_labels.tsv").open("w", encoding="utf-8") as fh:
        for lab, k in chosen:
            fh.write(f"{lab}\t{new_id[k]}\n")

    summary = {
        "seed": config.seed,
        "stocks": config.n_stocks,
        "users": config.n_users,
        "trading_days": config.n_days,
        "tweets": len(tweets),
        "spam_tweets": len(spam_idx),
        "price_bars": len(bars),
        "spam_labels": len(chosen),
        "config": asdict(config),
    }
    logger.info("synthetic dataset: %d tweets, %d bars in %s", len(tweets), len(bars), outdir)
    return summary
