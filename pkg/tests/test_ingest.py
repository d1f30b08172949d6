import json
from datetime import date, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from conftest import tweet, ts, weekdays
from investnet.errors import CalendarError, DuplicateIdError, MalformedRecordError, OrderingError
from investnet.ingest import (PriceBar, TradingCalendar, User, assign_trading_day, check_calendar_covers,
                              drop_ticker_spam, extract_tickers, group_by_day, load_calendar, load_prices,
                              load_tweets, load_users, write_calendar, write_prices, write_tweets, write_users)


def _jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# -- users ------------------------------------------------------------------------

def test_three_valid_users(tmp_path):
    p = _jsonl(tmp_path / "u.jsonl", [{"user_id": f"u{i}", "follower_count": i, "tweet_count": 2 * i}
                                      for i in range(3)])
    users = load_users(p)
    assert len(users) == 3
    assert users["u2"] == User("u2", 2, 4)


def test_empty_user_file(tmp_path):
    p = tmp_path / "u.jsonl"
    p.write_text("")
    assert load_users(p) == {}


def test_duplicate_user_names_line(tmp_path):
    recs = [{"user_id": f"u{i}", "follower_count": 0, "tweet_count": 0} for i in range(6)]
    recs.append({"user_id": "u3", "follower_count": 1, "tweet_count": 1})
    p = _jsonl(tmp_path / "u.jsonl", recs)
    with pytest.raises(DuplicateIdError) as err:
        load_users(p)
    assert err.value.line_no == 7
    assert ":7:" in str(err.value)


def test_negative_followers_rejected(tmp_path):
    p = _jsonl(tmp_path / "u.jsonl", [{"user_id": "a", "follower_count": -1, "tweet_count": 0}])
    with pytest.raises(MalformedRecordError):
        load_users(p)


def test_missing_users_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_users(tmp_path / "nope.jsonl")


# -- tweets -----------------------------------------------------------------------

def _users(*ids):
    return {u: User(u, 0, 0) for u in ids}


def test_unknown_author_lenient(tmp_path, caplog):
    recs = [{"tweet_id": f"t{i}", "author_id": "a" if i != 2 else "ghost", "timestamp": 100 + i, "text": "x"}
            for i in range(5)]
    p = _jsonl(tmp_path / "t.jsonl", recs)
    batch = load_tweets(p, _users("a"), lenient=True)
    assert len(batch.tweets) == 4 and batch.rejected == 1
    assert "rejected 1" in caplog.text


def test_unknown_author_strict(tmp_path):
    p = _jsonl(tmp_path / "t.jsonl", [{"tweet_id": "t", "author_id": "ghost", "timestamp": 1}])
    with pytest.raises(MalformedRecordError):
        load_tweets(p, _users("a"))


def test_parent_later_timestamp(tmp_path):
    p = _jsonl(tmp_path / "t.jsonl", [
        {"tweet_id": "t1", "author_id": "a", "timestamp": 200, "text": "orig"},
        {"tweet_id": "t2", "author_id": "a", "timestamp": 100, "text": "rt", "parent_tweet_id": "t1"},
    ])
    with pytest.raises(OrderingError):
        load_tweets(p, _users("a"))


def test_tickers_deduplicated(tmp_path):
    p = _jsonl(tmp_path / "t.jsonl", [{"tweet_id": "t", "author_id": "a", "timestamp": 1,
                                       "tickers": ["A", "B", "A"]}])
    assert load_tweets(p, _users("a")).tweets[0].tickers == ("A", "B")


def test_cashtag_fallback(tmp_path):
    text = "$CMB(SH600036)$ and $Ping An(SH601318)$ again $CMB(SH600036)$"
    assert extract_tickers(text) == ("SH600036",)  # space in the name stops the match
    text = "$CMB(SH600036)$ vs $PingAn(SH601318)$ again $CMB(SH600036)$"
    assert extract_tickers(text) == ("SH600036", "SH601318")
    p = _jsonl(tmp_path / "t.jsonl", [{"tweet_id": "t", "author_id": "a", "timestamp": 1, "text": text}])
    assert load_tweets(p, _users("a")).tweets[0].tickers == ("SH600036", "SH601318")


def test_duplicate_tweet_id(tmp_path):
    p = _jsonl(tmp_path / "t.jsonl", [{"tweet_id": "t", "author_id": "a", "timestamp": 1}] * 2)
    with pytest.raises(DuplicateIdError) as err:
        load_tweets(p, _users("a"))
    assert err.value.line_no == 2


def test_bad_timestamp(tmp_path):
    p = _jsonl(tmp_path / "t.jsonl", [{"tweet_id": "t", "author_id": "a", "timestamp": "noon"}])
    with pytest.raises(MalformedRecordError):
        load_tweets(p, _users("a"))


# -- prices -----------------------------------------------------------------------

HEADER = "stock_id,date,close,volume,turnover_rate,pe_ratio\n"


def test_close_zero_rejected(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text(HEADER + "SH600000,2014-11-03,0,100,0.01,5\n")
    with pytest.raises(MalformedRecordError):
        load_prices(p)


def test_two_stocks_ten_days_sorted(tmp_path):
    days = weekdays(date(2014, 11, 3), 10)
    rows = [f"{s},{d.isoformat()},10,100,0.01,5\n" for d in reversed(days) for s in ("SZ000002", "SH600000")]
    p = tmp_path / "p.csv"
    p.write_text(HEADER + "".join(rows))
    bars = load_prices(p)
    assert len(bars) == 20
    assert [(b.stock_id, b.date) for b in bars] == sorted((b.stock_id, b.date) for b in bars)


def test_pe_dash_is_absent(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text(HEADER + "SH600000,2014-11-03,10,100,0.01,-\nSH600000,2014-11-04,10,100,0.01,0\n")
    a, b = load_prices(p)
    assert a.pe_ratio is None
    assert b.pe_ratio == 0.0  # zero is a real value, not missing


def test_turnover_out_of_range(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text(HEADER + "SH600000,2014-11-03,10,100,1.5,\n")
    with pytest.raises(MalformedRecordError):
        load_prices(p)


def test_duplicate_bar(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text(HEADER + "A,2014-11-03,10,100,0.1,\nA,2014-11-03,11,100,0.1,\n")
    with pytest.raises(DuplicateIdError):
        load_prices(p)


def test_calendar_must_cover_bars():
    cal = TradingCalendar((date(2014, 11, 3),))
    with pytest.raises(CalendarError):
        check_calendar_covers(cal, [PriceBar("A", date(2014, 11, 4), 1.0, 0.0, 0.0)])


def test_calendar_strictly_increasing():
    with pytest.raises(CalendarError):
        TradingCalendar((date(2014, 11, 4), date(2014, 11, 3)))


# -- trading-day assignment ---------------------------------------------------------

def test_before_close_same_day(cal):
    d = cal.dates[2]
    assert assign_trading_day(ts(d, 14, 59), cal) == d


def test_after_close_next_day(cal):
    d = cal.dates[2]
    assert assign_trading_day(ts(d, 15, 1), cal) == cal.dates[3]


def test_exactly_close_is_same_day(cal):
    d = cal.dates[2]
    assert assign_trading_day(ts(d, 15, 0), cal) == d
    assert assign_trading_day(ts(d, 15, 0, 1), cal) == cal.dates[3]


def test_saturday_rolls_to_monday(cal):
    sat = date(2014, 11, 8)
    assert sat.weekday() == 5
    for hh in (0, 9, 15, 23):
        assert assign_trading_day(ts(sat, hh), cal) == date(2014, 11, 10)


def test_friday_evening_rolls_to_monday(cal):
    assert assign_trading_day(ts(date(2014, 11, 7), 20), cal) == date(2014, 11, 10)


def test_beyond_horizon(cal):
    with pytest.raises(CalendarError):
        assign_trading_day(ts(cal.dates[-1], 15, 1), cal)


def test_lead_in_before_first_day(cal):
    first = cal.dates[0]
    assert assign_trading_day(ts(first - timedelta(days=1), 15, 1), cal) == first
    with pytest.raises(CalendarError):
        assign_trading_day(ts(first - timedelta(days=1), 15, 0), cal)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 12 * 86400), st.integers(0, 12 * 86400))
def test_assignment_monotone(a, b):
    cal = TradingCalendar(weekdays(date(2014, 11, 3), 12))
    base = ts(date(2014, 11, 3), 0)
    t1, t2 = sorted((base + a, base + b))
    assert assign_trading_day(t1, cal) <= assign_trading_day(t2, cal)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 12 * 86400), max_size=40))
def test_grouped_tweets_belong_to_their_day(offsets):
    cal = TradingCalendar(weekdays(date(2014, 11, 3), 12))
    base = ts(date(2014, 11, 3), 0)
    tweets = [tweet(f"t{i}", when=base + o) for i, o in enumerate(offsets)]
    by_day, outside = group_by_day(tweets, cal)
    assert sum(map(len, by_day.values())) + outside == len(tweets)
    for d, ts_ in by_day.items():
        assert all(assign_trading_day(t.timestamp, cal) == d for t in ts_)


# -- ticker spam ----------------------------------------------------------------------

def test_ticker_spam_rule():
    six = tweet("a", tickers=[f"S{i}" for i in range(6)])
    five = tweet("b", tickers=[f"S{i}" for i in range(5)])
    kept, dropped = drop_ticker_spam([six, five], 5)
    assert kept == [five] and dropped == 1


def test_ticker_spam_empty():
    assert drop_ticker_spam([], 5) == ([], 0)


# -- round trip -------------------------------------------------------------------------

names = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=6)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 10**9), st.integers(0, 10**6)), min_size=1, max_size=6),
    st.lists(st.tuples(st.integers(0, 10**6), st.text(max_size=30), st.lists(names, max_size=4, unique=True)),
             max_size=8),
    st.lists(st.tuples(st.floats(0.01, 1e4), st.floats(0, 1e9), st.floats(0, 1),
                       st.one_of(st.none(), st.floats(-1e3, 1e3))), min_size=1, max_size=6),
)
def test_round_trip(tmp_path_factory, user_rows, tweet_rows, bar_rows):
    d = tmp_path_factory.mktemp("rt")
    users = [User(f"u{i}", f, n) for i, (f, n) in enumerate(user_rows)]
    tweets = []
    for i, (t, text, tickers) in enumerate(sorted(tweet_rows)):
        parent = tweets[-1].tweet_id if tweets and i % 2 else None
        tweets.append(tweet(f"t{i}", users[i % len(users)].user_id, t, text, tickers, parent))
    days = weekdays(date(2014, 11, 3), len(bar_rows))
    bars = [PriceBar("SH600000", day, c, v, r, pe) for day, (c, v, r, pe) in zip(days, bar_rows)]
    cal = TradingCalendar(days)
    write_users(users, d / "u.jsonl")
    write_tweets(tweets, d / "t.jsonl")
    write_prices(bars, d / "p.csv")
    write_calendar(cal, d / "c.txt")
    loaded_users = load_users(d / "u.jsonl")
    assert list(loaded_users.values()) == users
    assert load_tweets(d / "t.jsonl", loaded_users).tweets == tweets
    assert load_prices(d / "p.csv") == bars
    assert load_calendar(d / "c.txt") == cal
