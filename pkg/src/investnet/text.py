"""Tokenization, Naive Bayes sentiment and logistic-regression spam filtering."""

from __future__ import annotations

import logging
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CalendarError, MalformedRecordError, ModelError
from .ingest import Tweet, TradingCalendar, User, assign_trading_day
from .persist import dump_model, load_model

logger = logging.getLogger(__name__)


class Sentiment(str, Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


# argmax ties resolve to the earliest entry
LABEL_ORDER = (Sentiment.NEGATIVE, Sentiment.NEUTRAL, Sentiment.POSITIVE)

_CJK = "㐀-䶿一-鿿豈-﫿"
_TOKEN_RE = re.compile(rf"(?P<cjk>[{_CJK}]+)|[^\s{_CJK}]+")
_STRIP = ".,!?;:\"'()[]{}<>，。！？；：、“”‘’（）"


def tokenize(text: str) -> list[str]:
    """Whitespace tokens for space-delimited scripts, character bigrams for CJK runs."""
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        piece = m.group(0)
        if m.group("cjk"):
            if len(piece) == 1:
                tokens.append(piece)
            else:
                tokens.extend(piece[i:i + 2] for i in range(len(piece) - 1))
        else:
            piece = piece.strip(_STRIP).lower()
            if piece:
                tokens.append(piece)
    return tokens


# -- Naive Bayes ------------------------------------------------------------------


@dataclass(frozen=True)
class NaiveBayesModel:
    """Multinomial Naive Bayes with additive smoothing.

    ``log_likelihood[v, c]`` is log P(token v | class c) with classes in
    ``LABEL_ORDER``. Tokens outside the vocabulary carry no evidence.
    """

    vocabulary: dict[str, int]
    log_prior: np.ndarray
    log_likelihood: np.ndarray
    alpha: float = 1.0

    @property
    def priors(self) -> dict[Sentiment, float]:
        return {lab: float(math.exp(lp)) for lab, lp in zip(LABEL_ORDER, self.log_prior)}

    def log_joint(self, tokens: Iterable[str]) -> np.ndarray:
        idx = [self.vocabulary[t] for t in tokens if t in self.vocabulary]
        return self.log_prior + self.log_likelihood[idx].sum(axis=0)

    def posterior(self, tokens: Iterable[str]) -> np.ndarray:
        lj = self.log_joint(tokens)
        lj = lj - lj.max()
        p = np.exp(lj)
        return p / p.sum()

    def save(self, path) -> None:
        tokens = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        dump_model("naive_bayes", {
            "alpha": self.alpha,
            "labels": [lab.value for lab in LABEL_ORDER],
            "log_prior": self.log_prior.tolist(),
            "tokens": tokens,
            "log_likelihood": self.log_likelihood.tolist(),
        }, path)

    @classmethod
    def load(cls, path) -> "NaiveBayesModel":
        doc = load_model("naive_bayes", path)
        vocab = {t: i for i, t in enumerate(doc["tokens"])}
        ll = np.array(doc["log_likelihood"], dtype=float).reshape(len(vocab), len(LABEL_ORDER))
        return cls(vocab, np.array(doc["log_prior"], dtype=float), ll, float(doc["alpha"]))


def train_naive_bayes(corpus: Iterable[tuple[Sequence[str], Sentiment]], alpha: float = 1.0) -> NaiveBayesModel:
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    doc_counts = Counter()
    token_counts: dict[Sentiment, Counter] = defaultdict(Counter)
    for tokens, label in corpus:
        label = Sentiment(label)
        doc_counts[label] += 1
        token_counts[label].update(tokens)
    if not doc_counts:
        raise ModelError("empty sentiment corpus")
    missing = [lab.value for lab in LABEL_ORDER if doc_counts[lab] == 0]
    if missing:
        raise ModelError(f"sentiment corpus has no documents for: {', '.join(missing)}")

    vocab_tokens = sorted(set().union(*(c.keys() for c in token_counts.values())))
    vocab = {t: i for i, t in enumerate(vocab_tokens)}
    counts = np.zeros((len(vocab), len(LABEL_ORDER)))
    for c, lab in enumerate(LABEL_ORDER):
        for tok, n in token_counts[lab].items():
            counts[vocab[tok], c] = n
    totals = counts.sum(axis=0)
    log_lik = np.log(counts + alpha) - np.log(totals + alpha * len(vocab))
    n_docs = sum(doc_counts.values())
    log_prior = np.log(np.array([doc_counts[lab] for lab in LABEL_ORDER], dtype=float) / n_docs)
    return NaiveBayesModel(vocab, log_prior, log_lik, float(alpha))


def classify_tokens(model: NaiveBayesModel, tokens: Iterable[str]) -> Sentiment:
    return LABEL_ORDER[int(np.argmax(model.log_joint(tokens)))]


def classify_sentiment(model: NaiveBayesModel, tweet: Tweet) -> Sentiment:
    return classify_tokens(model, tokenize(tweet.text))


def load_sentiment_corpus(path) -> list[tuple[list[str], Sentiment]]:
    """Read ``label<TAB>text`` lines into tokenized training pairs."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise MalformedRecordError(path, line_no, "expected label<TAB>text")
            try:
                lab = Sentiment(label.strip().lower())
            except ValueError:
                raise MalformedRecordError(path, line_no, f"unknown sentiment label {label!r}") from None
            out.append((tokenize(text), lab))
    return out


# -- spam detection ---------------------------------------------------------------

SPAM_FEATURES = (
    "digit_ratio",
    "log_followers",
    "log_author_tweets",
    "text_length",
    "url_count",
    "ticker_count",
    "tag_mention_count",
    "repeat_run_ratio",
    "punctuation_ratio",
    "duplicate_text",
)

_URL_RE = re.compile(r"https?://\S+")
_TAG_RE = re.compile(r"#[^#\s]+#?|@\w+")
_RUN_RE = re.compile(r"(.)\1{2,}", re.DOTALL)


def spam_features(tweet: Tweet, author: User, duplicate: bool = False) -> np.ndarray:
    text = tweet.text
    n = len(text)
    digits = sum(ch.isdigit() for ch in text)
    punct = sum(unicodedata.category(ch).startswith("P") for ch in text)
    run_chars = sum(len(m.group(0)) for m in _RUN_RE.finditer(text))
    return np.array([
        digits / n if n else 0.0,
        math.log1p(author.follower_count),
        math.log1p(author.tweet_count),
        float(n),
        float(len(_URL_RE.findall(text))),
        float(len(tweet.tickers)),
        float(len(_TAG_RE.findall(text))),
        run_chars / n if n else 0.0,
        punct / n if n else 0.0,
        1.0 if duplicate else 0.0,
    ])


def duplicate_flags(tweets: Sequence[Tweet], cal: TradingCalendar) -> list[bool]:
    """True for every tweet whose exact text appears more than once on its trading day."""
    keys = []
    for t in tweets:
        try:
            day = assign_trading_day(t.timestamp, cal)
        except CalendarError:
            day = None
        keys.append((day, t.text))
    counts = Counter(keys)
    return [counts[k] > 1 for k in keys]


def spam_feature_matrix(tweets: Sequence[Tweet], users: Mapping[str, User], cal: TradingCalendar) -> np.ndarray:
    if not tweets:
        return np.zeros((0, len(SPAM_FEATURES)))
    dup = duplicate_flags(tweets, cal)
    return np.vstack([spam_features(t, users[t.author_id], d) for t, d in zip(tweets, dup)])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss_grad(w: np.ndarray, Xb: np.ndarray, y: np.ndarray, l2: float = 0.0):
    """Mean cross-entropy and its gradient; the last column of ``Xb`` is the bias."""
    z = Xb @ w
    # log(1 + e^z) - y z, stable for large |z|
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w[:-1], w[:-1])
    grad = Xb.T @ (_sigmoid(z) - y) / len(y)
    grad[:-1] += l2 * w[:-1]
    return float(loss), grad


@dataclass(frozen=True)
class SpamModel:
    """Logistic regression over ``SPAM_FEATURES`` on standardized inputs.

    ``weights`` has one entry per feature followed by the bias.
    """

    weights: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    feature_names: tuple[str, ...] = SPAM_FEATURES
    losses: tuple[float, ...] = field(default=(), compare=False)

    def probability(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        z = ((X - self.mean) / self.scale) @ self.weights[:-1] + self.weights[-1]
        # the logistic function never reaches 0 or 1 for finite input
        return np.clip(_sigmoid(z), np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)

    def save(self, path) -> None:
        dump_model("spam", {
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }, path)

    @classmethod
    def load(cls, path) -> "SpamModel":
        doc = load_model("spam", path)
        if tuple(doc["feature_names"]) != SPAM_FEATURES:
            raise ValueError(f"{path}: spam feature order does not match this version")
        return cls(np.array(doc["weights"]), np.array(doc["mean"]), np.array(doc["scale"]))


def train_spam_model(X: np.ndarray, y: np.ndarray, learning_rate: float = 0.1, epochs: int = 500,
                     l2: float = 0.0) -> SpamModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be (n, d) with len(y) == n > 0")
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    if len(np.unique(y)) < 2:
        raise ModelError("spam training data contains a single class")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    mean = np.where(scale > 0, mean, 0.0)
    scale = np.where(scale > 0, scale, 1.0)
    Xb = np.hstack([(X - mean) / scale, np.ones((len(X), 1))])
    w = np.zeros(Xb.shape[1])
    losses = []
    for _ in range(epochs):
        loss, grad = logistic_loss_grad(w, Xb, y, l2)
        losses.append(loss)
        w = w - learning_rate * grad
    losses.append(logistic_loss_grad(w, Xb, y, l2)[0])
    if not np.all(np.isfinite(w)):
        raise ModelError("spam model weights are not finite")
    return SpamModel(w, mean, scale, SPAM_FEATURES, tuple(losses))


def filter_spam(model: SpamModel, tweets: Sequence[Tweet], users: Mapping[str, User],
                cal: TradingCalendar, threshold: float = 0.5) -> tuple[list[Tweet], int]:
    """Drop tweets whose spam probability is at least ``threshold``.

    The duplicate-text feature depends on which tweets remain, so filtering is
    repeated until nothing more is removed; the result is a fixed point.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    kept = list(tweets)
    while kept:
        p = model.probability(spam_feature_matrix(kept, users, cal))
        keep_mask = p < threshold
        if keep_mask.all():
            break
        kept = [t for t, k in zip(kept, keep_mask) if k]
    return kept, len(tweets) - len(kept)


def load_spam_labels(path) -> dict[str, int]:
    """Read ``label<TAB>tweet_id`` lines; labels are 1/0 or spam/ham."""
    mapping = {"1": 1, "0": 0, "spam": 1, "ham": 0}
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            label, sep, tid = line.rstrip("\n").partition("\t")
            if not sep or label.strip().lower() not in mapping:
                raise MalformedRecordError(path, line_no, "expected <1|0|spam|ham><TAB>tweet_id")
            out[tid.strip()] = mapping[label.strip().lower()]
    return out
