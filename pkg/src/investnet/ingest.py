"""File ingestion: users, tweets, price bars and the trading-day calendar.

File formats
------------
users.jsonl
    One JSON object per line: ``{"user_id": str, "follower_count": int,
    "tweet_count": int}``.
tweets.jsonl
    One JSON object per line: ``{"tweet_id": str, "author_id": str,
    "timestamp": <UTC seconds>, "text": str, "tickers": [str, ...],
    "parent_tweet_id": str | null}``. ``tickers`` may be omitted, in which
    case cashtags of the form ``$NAME(SH600036)$`` are extracted from text.
prices.csv
    Header ``stock_id,date,close,volume,turnover_rate,pe_ratio``; ISO dates;
    an empty (or ``-``) ``pe_ratio`` means the value is absent.
calendar.txt
    One ISO date per line. When no calendar file is given the calendar is
    the union of price-bar dates.
"""

from __future__ import annotations

import bisect
import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import CalendarError, DuplicateIdError, MalformedRecordError, OrderingError

logger = logging.getLogger(__name__)

PRICE_HEADER = ["stock_id", "date", "close", "volume", "turnover_rate", "pe_ratio"]

# $Name(SH600036)$ -> SH600036
CASHTAG_RE = re.compile(r"\$([^$()\s]+)\(([A-Z]{2}\d{6})\)\$")


@dataclass(frozen=True)
class User:
    user_id: str
    follower_count: int = 0
    tweet_count: int = 0


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    author_id: str
    timestamp: float
    text: str
    tickers: tuple[str, ...] = ()
    parent_tweet_id: str | None = None


@dataclass(frozen=True)
class PriceBar:
    stock_id: str
    date: date
    close: float
    volume: float
    turnover_rate: float
    pe_ratio: float | None = None


class TweetBatch(NamedTuple):
    tweets: list[Tweet]
    rejected: int


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered trading dates plus the daily close that separates trading days.

    A trading day runs from the previous session's close (exclusive) to this
    session's close (inclusive). Wall-clock time is interpreted in the market's
    fixed UTC offset (Shanghai, +8h, by default).
    """

    dates: tuple[date, ...]
    cutoff: time = time(15, 0)
    utc_offset_hours: float = 8.0
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        dates = tuple(self.dates)
        for a, b in zip(dates, dates[1:]):
            if not a < b:
                raise CalendarError(f"calendar dates not strictly increasing at {a} -> {b}")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(dates)})

    @classmethod
    def from_bars(cls, bars: Iterable[PriceBar], **kwargs) -> "TradingCalendar":
        return cls(tuple(sorted({b.date for b in bars})), **kwargs)

    def __len__(self):
        return len(self.dates)

    def __contains__(self, d):
        return d in self._index

    def index(self, d: date) -> int:
        try:
            return self._index[d]
        except KeyError:
            raise CalendarError(f"{d} is not a trading day") from None

    def shift(self, d: date, n: int) -> date | None:
        """Trading date ``n`` sessions after ``d`` (negative for before), or None."""
        i = self.index(d) + n
        if 0 <= i < len(self.dates):
            return self.dates[i]
        return None

    def window(self, d: date, size: int) -> tuple[date, ...]:
        """The ``size`` trading dates ending at and including ``d``."""
        i = self.index(d)
        return self.dates[max(0, i - size + 1): i + 1]

    @property
    def tz(self) -> timezone:
        return timezone(timedelta(hours=self.utc_offset_hours))

    def close_timestamp(self, d: date) -> float:
        return datetime.combine(d, self.cutoff, tzinfo=self.tz).timestamp()

    def assign(self, timestamp: float) -> date:
        return assign_trading_day(timestamp, self)


def assign_trading_day(timestamp: float, cal: TradingCalendar) -> date:
    """Map a UTC timestamp to the trading day whose session it informs.

    At or before the close on a trading day maps to that day; after the close,
    or any time on a non-trading day, maps to the next trading day.
    """
    if not cal.dates:
        raise CalendarError("empty calendar")
    local = datetime.fromtimestamp(timestamp, tz=cal.tz)
    d, t = local.date(), local.time()
    if d in cal and t <= cal.cutoff:
        return d
    # first trading date strictly after d
    i = bisect.bisect_right(cal.dates, d)
    if i >= len(cal.dates):
        raise CalendarError(f"timestamp {timestamp} ({local.isoformat()}) is beyond the calendar horizon")
    if i == 0:
        # at most one calendar day of lead-in before the first session's window
        earliest = datetime.combine(cal.dates[0] - timedelta(days=1), cal.cutoff, tzinfo=cal.tz)
        if local <= earliest:
            raise CalendarError(f"timestamp {timestamp} ({local.isoformat()}) precedes the calendar")
    return cal.dates[i]


def extract_tickers(text: str) -> tuple[str, ...]:
    """Cashtag scan fallback used when a record carries no tickers field."""
    return dedupe(m.group(2) for m in CASHTAG_RE.finditer(text))


def dedupe(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def _iter_json_lines(path: Path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise MalformedRecordError(path, line_no, "record is not an object")
            yield line_no, rec


def _nonneg_int(value, path, line_no, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value) or value < 0:
        raise MalformedRecordError(path, line_no, f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def load_users(path) -> dict[str, User]:
    users: dict[str, User] = {}
    for line_no, rec in _iter_json_lines(path):
        try:
            uid = rec["user_id"]
        except KeyError:
            raise MalformedRecordError(path, line_no, "missing user_id") from None
        if not isinstance(uid, str) or not uid:
            raise MalformedRecordError(path, line_no, f"user_id must be a non-empty string, got {uid!r}")
        if uid in users:
            raise DuplicateIdError(path, line_no, f"duplicate user_id {uid!r}")
        users[uid] = User(
            uid,
            _nonneg_int(rec.get("follower_count", 0), path, line_no, "follower_count"),
            _nonneg_int(rec.get("tweet_count", 0), path, line_no, "tweet_count"),
        )
    return users


def load_tweets(path, users: dict[str, User], lenient: bool = False) -> TweetBatch:
    """Parse tweets, resolving authors against ``users``.

    Unknown authors raise in strict mode; with ``lenient`` they are dropped and
    counted in ``TweetBatch.rejected``.
    """
    tweets: list[Tweet] = []
    seen: dict[str, int] = {}
    rejected = 0
    for line_no, rec in _iter_json_lines(path):
        for key in ("tweet_id", "author_id", "timestamp"):
            if key not in rec:
                raise MalformedRecordError(path, line_no, f"missing {key}")
        ts = rec["timestamp"]
        if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
            raise MalformedRecordError(path, line_no, f"malformed timestamp {ts!r}")
        tid = str(rec["tweet_id"])
        if tid in seen:
            raise DuplicateIdError(path, line_no, f"duplicate tweet_id {tid!r}")
        author = str(rec["author_id"])
        if author not in users:
            if not lenient:
                raise MalformedRecordError(path, line_no, f"unknown author {author!r}")
            rejected += 1
            continue
        text = rec.get("text") or ""
        if "tickers" in rec and rec["tickers"] is not None:
            tickers = dedupe(str(t) for t in rec["tickers"])
        else:
            tickers = extract_tickers(text)
        parent = rec.get("parent_tweet_id")
        seen[tid] = len(tweets)
        tweets.append(Tweet(tid, author, ts, text, tickers, None if parent is None else str(parent)))
    by_id = {t.tweet_id: t for t in tweets}
    for t in tweets:
        if t.parent_tweet_id is None:
            continue
        parent = by_id.get(t.parent_tweet_id)
        if parent is not None and parent.timestamp > t.timestamp:
            raise OrderingError(
                f"tweet {t.tweet_id!r} forwards {parent.tweet_id!r}, which has a later timestamp"
            )
    if rejected:
        logger.warning("%s: rejected %d tweet(s) with unknown authors", path, rejected)
    return TweetBatch(tweets, rejected)


def _parse_float(value, path, line_no, name):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise MalformedRecordError(path, line_no, f"{name} is not a number: {value!r}") from None


def load_prices(path) -> list[PriceBar]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    bars: list[PriceBar] = []
    keys = set()
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != PRICE_HEADER:
            raise MalformedRecordError(path, 1, f"expected header {','.join(PRICE_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PRICE_HEADER):
                raise MalformedRecordError(path, line_no, f"expected {len(PRICE_HEADER)} fields, got {len(row)}")
            stock_id, d, close, volume, turnover, pe = (c.strip() for c in row)
            try:
                day = date.fromisoformat(d)
            except ValueError:
                raise MalformedRecordError(path, line_no, f"bad date {d!r}") from None
            close_v = _parse_float(close, path, line_no, "close")
            if not close_v > 0:
                raise MalformedRecordError(path, line_no, f"close must be > 0, got {close_v!r}")
            volume_v = _parse_float(volume, path, line_no, "volume")
            if volume_v < 0:
                raise MalformedRecordError(path, line_no, f"volume must be >= 0, got {volume_v!r}")
            turnover_v = _parse_float(turnover, path, line_no, "turnover_rate")
            if not 0.0 <= turnover_v <= 1.0:
                raise MalformedRecordError(path, line_no, f"turnover_rate outside [0, 1]: {turnover_v!r}")
            pe_v = None if pe in ("", "-") else _parse_float(pe, path, line_no, "pe_ratio")
            if (stock_id, day) in keys:
                raise DuplicateIdError(path, line_no, f"duplicate bar for {stock_id} on {day}")
            keys.add((stock_id, day))
            bars.append(PriceBar(stock_id, day, close_v, volume_v, turnover_v, pe_v))
    bars.sort(key=lambda b: (b.stock_id, b.date))
    return bars


def load_calendar(path, **kwargs) -> TradingCalendar:
    path = Path(path)
    dates = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                dates.append(date.fromisoformat(line))
            except ValueError:
                raise MalformedRecordError(path, line_no, f"bad date {line!r}") from None
    return TradingCalendar(tuple(dates), **kwargs)


def check_calendar_covers(cal: TradingCalendar, bars: Sequence[PriceBar]) -> None:
    missing = sorted({b.date for b in bars if b.date not in cal})
    if missing:
        raise CalendarError(f"{len(missing)} price-bar date(s) missing from calendar, first {missing[0]}")


def drop_ticker_spam(tweets: Sequence[Tweet], max_tickers: int = 5) -> tuple[list[Tweet], int]:
    """Remove tweets listing more than ``max_tickers`` stocks."""
    if max_tickers < 1:
        raise ValueError("max_tickers must be >= 1")
    kept = [t for t in tweets if len(t.tickers) <= max_tickers]
    return kept, len(tweets) - len(kept)


# -- writers (used by the synthetic generator and for round-trips) --------------


def write_users(users: Iterable[User], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for u in users:
            fh.write(json.dumps({"user_id": u.user_id, "follower_count": u.follower_count,
                                 "tweet_count": u.tweet_count}, ensure_ascii=False) + "\n")


def write_tweets(tweets: Iterable[Tweet], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in tweets:
            fh.write(json.dumps({
                "tweet_id": t.tweet_id, "author_id": t.author_id, "timestamp": t.timestamp,
                "text": t.text, "tickers": list(t.tickers), "parent_tweet_id": t.parent_tweet_id,
            }, ensure_ascii=False) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_prices(bars: Iterable[PriceBar], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_HEADER)
        for b in bars:
            w.writerow([b.stock_id, b.date.isoformat(), _fmt(b.close), _fmt(b.volume),
                        _fmt(b.turnover_rate), "" if b.pe_ratio is None else _fmt(b.pe_ratio)])


def write_calendar(cal: TradingCalendar, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for d in cal.dates:
            fh.write(d.isoformat() + "\n")


def group_by_day(tweets: Iterable[Tweet], cal: TradingCalendar) -> tuple[dict[date, list[Tweet]], int]:
    """Bucket tweets by trading day; tweets outside the calendar are counted and dropped."""
    out: dict[date, list[Tweet]] = {d: [] for d in cal.dates}
    outside = 0
    for t in tweets:
        try:
            out[assign_trading_day(t.timestamp, cal)].append(t)
        except CalendarError:
            outside += 1
    return out, outside


