import hashlib

import numpy as np
import pytest

from conftest import SMALL_SYNTH, planted_signal_run
from investnet.eval import fit_power_law_ccdf
from investnet.features import bars_by_stock, movement_label
from investnet.ingest import extract_tickers, load_prices, load_tweets, load_users
from investnet.stock_graph import cumulative_cooccurrence, top_cooccurring
from investnet.synth import FILES, SynthConfig, cashtag, discrete_power_law, generate, stock_symbols


def _digest(path):
    return {name: hashlib.sha256((path / name).read_bytes()).hexdigest() for name in FILES}


def test_same_seed_identical_files(tmp_path):
    cfg = dict(SMALL_SYNTH, n_days=25)
    generate(SynthConfig(**cfg, seed=3), tmp_path / "a")
    generate(SynthConfig(**cfg, seed=3), tmp_path / "b")
    generate(SynthConfig(**cfg, seed=4), tmp_path / "c")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


@pytest.mark.parametrize("bad", [dict(n_days=0), dict(n_stocks=0), dict(spam_rate=1.5),
                                 dict(sentiment_signal=-0.1), dict(polarity=2.0)])
def test_invalid_config_rejected(bad, tmp_path):
    with pytest.raises(ValueError):
        generate(SynthConfig(**bad), tmp_path)
    assert not (tmp_path / "tweets.jsonl").exists()


def test_power_law_sampler_exponent():
    rng = np.random.default_rng(0)
    v = discrete_power_law(rng, 0.624, 100_000)
    assert v.min() >= 1
    fit = fit_power_law_ccdf(v)
    assert abs(-fit.exponent - 0.624) <= 0.05


def test_cashtags_parse_back():
    syms = stock_symbols(3)
    text = " ".join(cashtag(s) for s in syms) + " hello"
    assert extract_tickers(text) == tuple(syms)


def test_dataset_loads_and_is_consistent(small_dataset):
    path, summary = small_dataset
    users = load_users(path / "users.jsonl")
    batch = load_tweets(path / "tweets.jsonl", users)
    assert batch.rejected == 0 and len(batch.tweets) == summary["tweets"]
    ids = {t.tweet_id for t in batch.tweets}
    times = [t.timestamp for t in batch.tweets]
    assert times == sorted(times)
    for t in batch.tweets:
        if t.parent_tweet_id is not None:
            assert t.parent_tweet_id in ids
    bars = load_prices(path / "prices.csv")
    assert len(bars) == summary["price_bars"] == SMALL_SYNTH["n_stocks"] * SMALL_SYNTH["n_days"]


def test_block_structure_recovered(small_dataset):
    path, _ = small_dataset
    users = load_users(path / "users.jsonl")
    tweets = [t for t in load_tweets(path / "tweets.jsonl", users).tweets if len(t.tickers) <= 5]
    g = cumulative_cooccurrence(tweets)
    syms = stock_symbols(SMALL_SYNTH["n_stocks"])
    block = {s: i // SMALL_SYNTH["block_size"] for i, s in enumerate(syms)}
    hits = [block[top_cooccurring(g, s, 1)[0][0]] == block[s] for s in syms]
    assert np.mean(hits) >= 0.9


def test_null_signal_labels_balanced(tmp_path):
    generate(SynthConfig(n_stocks=20, n_users=200, n_days=120, tweets_per_stock_day=2.0, spam_labels=10,
                         corpus_per_class=5, sentiment_signal=0.5, seed=1), tmp_path)
    series = bars_by_stock(load_prices(tmp_path / "prices.csv"))
    labels = [movement_label(a.close, b.close) for bars in series.values() for a, b in zip(bars, bars[1:])]
    assert abs(np.mean(np.array(labels) == 1) - 0.5) <= 0.05


def test_spam_labels_balanced(small_dataset):
    path, summary = small_dataset
    rows = [line.split("\t") for line in (path / "spam_labels.tsv").read_text().splitlines()]
    assert len(rows) == summary["spam_labels"]
    share = np.mean([r[0] == "1" for r in rows])
    assert 0.3 <= share <= 0.5


@pytest.mark.slow
def test_strong_signal_recovered(tmp_path):
    # default 50 stocks over 120 days
    res = planted_signal_run(tmp_path, 0.9, seed=2)
    for model, (_, full, n_test) in res.items():
        assert n_test >= 2000
        assert full >= 0.75, (model, full)


@pytest.mark.slow
def test_null_signal_full_auc_near_half(planted_runs):
    res, _ = planted_runs(0.5)
    for model, (_, full, n_test) in res.items():
        assert n_test >= 2000
        assert abs(full - 0.5) <= 0.03, (model, full)
