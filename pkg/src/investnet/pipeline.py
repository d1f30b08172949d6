"""Config loading and the end-to-end stages behind the command line.

Config file (YAML)
------------------
::

    seed: 0
    output: out            # run directory; relative paths resolve against the config file
    threads: 1
    data:
      dir: null            # default <output>/data
      users: users.jsonl   # file names are relative to data.dir
      tweets: tweets.jsonl
      prices: prices.csv
      calendar: null       # default: union of price-bar dates
      sentiment_corpus: sentiment_corpus.tsv
      spam_labels: spam_labels.tsv   # optional; spam filter skipped when absent
    pipeline:
      max_tickers: 5
      spam_threshold: 0.5
      cooccurrence_window: 3
      cooccurrence_min_weight: 2
      min_days: 10
      min_daily_tweets: 10.0
      damping: 0.85
      lenient: false
    evaluate:
      models: [svm, mlp]
      ablations: [[stock], [stock, sentiment], [stock, relatedness], [stock, sentiment, relatedness]]
      importance: true
    models: {...}          # ModelConfig fields
    synth: {...}           # SynthConfig fields except seed

Unknown keys are rejected. The root seed drives every random choice.
"""

from __future__ import annotations

import contextlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import eval as ev
from .errors import ConfigError, DataError, InvariantError, InvestnetError
from .features import (AssemblyStats, FEATURE_GROUPS, assemble_samples, bars_by_stock, market_sentiment_index,
                       read_samples, select_target_stocks, write_samples)
from .ingest import (check_calendar_covers, drop_ticker_spam, group_by_day, load_calendar, load_prices,
                     load_tweets, load_users, TradingCalendar)
from .stock_graph import build_stock_graph, cumulative_cooccurrence, top_cooccurring
from .synth import SynthConfig, generate
from .text import (Sentiment, classify_sentiment, filter_spam, load_sentiment_corpus, load_spam_labels,
                   spam_feature_matrix, train_naive_bayes, train_spam_model)
from .user_graph import rank_daily_graphs

logger = logging.getLogger(__name__)

SAMPLES_FILE = "samples.csv"
STAGE_COUNTS_FILE = "stage_counts.json"


@dataclass
class DataPaths:
    dir: str | None = None
    users: str = "users.jsonl"
    tweets: str = "tweets.jsonl"
    prices: str = "prices.csv"
    calendar: str | None = None
    sentiment_corpus: str = "sentiment_corpus.tsv"
    spam_labels: str | None = "spam_labels.tsv"


@dataclass
class PipelineSettings:
    max_tickers: int = 5
    spam_threshold: float = 0.5
    cooccurrence_window: int = 3
    cooccurrence_min_weight: int = 2
    min_days: int = 10
    min_daily_tweets: float = 10.0
    damping: float = 0.85
    lenient: bool = False


@dataclass
class EvaluateSettings:
    models: list = field(default_factory=lambda: ["svm", "mlp"])
    ablations: list = field(default_factory=lambda: [list(g) for g in ev.DEFAULT_ABLATIONS])
    importance: bool = True


@dataclass
class PipelineConfig:
    seed: int = 0
    output: str = "out"
    threads: int = 1
    data: DataPaths = field(default_factory=DataPaths)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    models: ev.ModelConfig = field(default_factory=ev.ModelConfig)
    synth: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def output_dir(self) -> Path:
        return _resolve(self.base_dir, self.output)

    @property
    def data_dir(self) -> Path:
        if self.data.dir is None:
            return self.output_dir / "data"
        return _resolve(self.base_dir, self.data.dir)

    def data_path(self, name: str) -> Path | None:
        value = getattr(self.data, name)
        return None if value is None else _resolve(self.data_dir, value)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.synth, seed=self.seed)

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        p = self.pipeline
        if not 0.0 < p.spam_threshold <= 1.0:
            raise ConfigError("pipeline.spam_threshold must lie in (0, 1]")
        if p.max_tickers < 1 or p.cooccurrence_window < 1 or p.cooccurrence_min_weight < 1:
            raise ConfigError("max_tickers, cooccurrence_window and cooccurrence_min_weight must be >= 1")
        if not 0.0 < p.damping <= 1.0:
            raise ConfigError("pipeline.damping must lie in (0, 1]")
        for m in self.evaluate.models:
            if m not in ("svm", "mlp"):
                raise ConfigError(f"unknown model {m!r}")
        if not self.evaluate.ablations:
            raise ConfigError("evaluate.ablations must list at least one feature group set")
        for g in self.evaluate.ablations:
            bad = [x for x in g if x not in FEATURE_GROUPS]
            if bad or not g:
                raise ConfigError(f"bad feature group set {g!r}")
        if "seed" in self.synth:
            raise ConfigError("synth.seed is not allowed; use the root seed")
        try:
            self.synth_config().validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synth: {exc}") from None


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    return cls(**raw)


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read a YAML config (or defaults when ``path`` is None) and apply non-None overrides."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = path.resolve().parent
    top = {"seed", "output", "threads", "data", "pipeline", "evaluate", "models", "synth"}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    synth = raw.get("synth") or {}
    if not isinstance(synth, dict):
        raise ConfigError("section 'synth' must be a mapping")
    bad = sorted(set(synth) - {f.name for f in fields(SynthConfig)} - {"seed"})
    if bad:
        raise ConfigError(f"unknown key(s) in synth: {', '.join(bad)}")
    cfg = PipelineConfig(
        seed=raw.get("seed", 0),
        output=raw.get("output", "out"),
        threads=raw.get("threads", 1),
        data=_section(DataPaths, raw.get("data"), "data"),
        pipeline=_section(PipelineSettings, raw.get("pipeline"), "pipeline"),
        evaluate=_section(EvaluateSettings, raw.get("evaluate"), "evaluate"),
        models=_section(ev.ModelConfig, raw.get("models"), "models"),
        synth=dict(synth),
        base_dir=base,
    )
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "output":
            cfg.output = str(Path(value).resolve())
        elif key == "models":
            cfg.evaluate.models = list(value)
        else:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


@contextlib.contextmanager
def stage(name: str):
    """Tag any exception escaping the block with the pipeline stage name."""
    try:
        yield
    except Exception as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.is_file():
        raise DataError(f"{what} file not found: {path}")
    return path


# -- synth ------------------------------------------------------------------------


def run_synth(cfg: PipelineConfig) -> dict:
    with stage("synth"):
        return generate(cfg.synth_config(), cfg.data_dir)


# -- features ---------------------------------------------------------------------


@dataclass
class Corpus:
    """Cleaned inputs shared by the feature and analytics stages."""

    users: dict
    all_tweets: list
    tweets: list
    bars: list
    cal: TradingCalendar
    tweets_by_day: dict
    labels: dict
    counts: dict


def load_corpus(cfg: PipelineConfig) -> Corpus:
    p = cfg.pipeline
    with stage("ingest"):
        users = load_users(_require(cfg.data_path("users"), "users"))
        batch = load_tweets(_require(cfg.data_path("tweets"), "tweets"), users, lenient=p.lenient)
        bars = load_prices(_require(cfg.data_path("prices"), "prices"))
        cal_path = cfg.data_path("calendar")
        if cal_path is not None:
            cal = load_calendar(_require(cal_path, "calendar"))
        else:
            cal = TradingCalendar.from_bars(bars)
        check_calendar_covers(cal, bars)
        total = len(batch.tweets) + batch.rejected
        by_day, outside = group_by_day(batch.tweets, cal)
        in_window = [t for d in cal.dates for t in by_day[d]]
    with stage("ticker_spam"):
        kept, n_ticker = drop_ticker_spam(in_window, p.max_tickers)
    with stage("spam_filter"):
        n_spam = 0
        spam_path = cfg.data_path("spam_labels")
        if spam_path is None or not spam_path.is_file():
            logger.warning("no spam labels at %s; spam filter skipped", spam_path)
        else:
            spam_labels = load_spam_labels(spam_path)
            pool = [t for t in batch.tweets if t.tweet_id in spam_labels]
            y = np.array([spam_labels[t.tweet_id] for t in pool], dtype=float)
            if len(pool) < 2 or len(np.unique(y)) < 2:
                logger.warning("spam labels cover %d tweet(s) and %d class(es); spam filter skipped",
                               len(pool), len(np.unique(y)))
            else:
                model = train_spam_model(spam_feature_matrix(pool, users, cal), y)
                kept, n_spam = filter_spam(model, kept, users, cal, p.spam_threshold)
    with stage("sentiment"):
        corpus_path = _require(cfg.data_path("sentiment_corpus"), "sentiment corpus")
        nb = train_naive_bayes(load_sentiment_corpus(corpus_path))
        labels = {t.tweet_id: classify_sentiment(nb, t) for t in kept}
    tweets_by_day, _ = group_by_day(kept, cal)
    counts = {
        "total": total,
        "rejected_unknown_author": batch.rejected,
        "outside_calendar": outside,
        "ticker_spam": n_ticker,
        "spam_filter": n_spam,
        "kept": len(kept),
    }
    dropped = counts["rejected_unknown_author"] + outside + n_ticker + n_spam
    counts["dropped"] = dropped
    if counts["kept"] + dropped != total:
        raise InvariantError(f"stage counts do not add up: {counts}")
    return Corpus(users, list(batch.tweets), kept, bars, cal, tweets_by_day, labels, counts)


def run_features(cfg: PipelineConfig) -> tuple[Path, dict]:
    """Build the samples file and per-stage counts; returns (samples path, counts)."""
    corpus = load_corpus(cfg)
    p = cfg.pipeline
    with stage("user_graph"):
        lookup = {t.tweet_id: t for t in corpus.all_tweets}
        user_graphs = rank_daily_graphs(corpus.tweets_by_day, lookup, damping=p.damping)
    with stage("stock_graph"):
        stock_graphs = {d: build_stock_graph(corpus.tweets_by_day, d, corpus.cal, p.cooccurrence_window,
                                             p.cooccurrence_min_weight) for d in corpus.cal.dates}
    with stage("features"):
        series = bars_by_stock(corpus.bars)
        targets = select_target_stocks(series, corpus.tweets_by_day, p.min_days, p.min_daily_tweets)
        if not targets:
            logger.warning("no stock qualifies as a target; writing an empty samples file")
        stats = AssemblyStats()
        samples = assemble_samples(series, corpus.tweets_by_day, corpus.labels, user_graphs, stock_graphs,
                                   corpus.cal, targets, stats)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / SAMPLES_FILE
    write_samples(samples, path, seed=cfg.seed)
    sent = Counter(corpus.labels.values())
    counts = {
        "seed": cfg.seed,
        "tweets": corpus.counts,
        "sentiment": {s.value: sent.get(s, 0) for s in Sentiment},
        "target_stocks": len(targets),
        "samples": len(samples),
        "skipped_warmup": stats.skipped_warmup,
        "skipped_no_next_bar": stats.skipped_no_next,
    }
    (out / STAGE_COUNTS_FILE).write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d samples for %d target stocks to %s", len(samples), len(targets), path)
    return path, counts


# -- evaluate ---------------------------------------------------------------------


def run_evaluate(cfg: PipelineConfig) -> Path:
    path = cfg.output_dir / SAMPLES_FILE
    if not path.is_file():
        logger.info("no samples at %s; building features first", path)
        run_features(cfg)
    with stage("evaluate"):
        samples = read_samples(path)
        try:
            splits = ev.make_rolling_splits(samples)
        except ValueError as exc:
            raise DataError(f"cannot evaluate: {exc}") from None
        if not splits:
            raise DataError("no month pair has both training and test samples")
        rows = ev.run_ablation(samples, [tuple(g) for g in cfg.evaluate.ablations], tuple(cfg.evaluate.models),
                               cfg.models, cfg.seed, cfg.threads, splits)
        importance = ev.forest_importance(samples, cfg.models, cfg.seed, splits) if cfg.evaluate.importance else []
        report = ev.EvalReport(cfg.seed, rows, importance, len(samples))
        outdir = cfg.output_dir / "report"
        ev.emit_report(report, outdir)
    return outdir


# -- analyze ----------------------------------------------------------------------


def run_analyze(cfg: PipelineConfig, top_stocks: int = 4, k: int = 5) -> Path:
    """Structural statistics of the cleaned corpus.

    The analysed population is the set of users who authored at least one
    tweet, so an empty tweet file yields empty tables.
    """
    corpus = load_corpus(cfg)
    out = cfg.output_dir / "analytics"
    out.mkdir(parents=True, exist_ok=True)
    with stage("analyze"):
        active = sorted({t.author_id for t in corpus.all_tweets})
        followers = [corpus.users[u].follower_count for u in active]
        xs, cc = ev.ccdf_points([f for f in followers if f > 0])
        ev.write_series(out / "ccdf.csv", [int(x) for x in xs], cc, ("followers", "ccdf"))
        try:
            fit = asdict(ev.fit_power_law_ccdf(followers))
            fit["status"] = "ok"
        except ValueError as exc:
            fit = {"status": "insufficient_data", "reason": str(exc)}
        fit["seed"] = cfg.seed
        fit["n_users"] = len(active)
        (out / "powerlaw.json").write_text(json.dumps(fit, indent=2, sort_keys=True) + "\n", encoding="utf-8")

        by_id = {t.tweet_id: t for t in corpus.all_tweets}
        forwarded: Counter = Counter()
        for t in corpus.tweets:
            parent = by_id.get(t.parent_tweet_id) if t.parent_tweet_id else None
            if parent is not None and parent.author_id != t.author_id:
                forwarded[parent.author_id] += 1
        ev.write_series(out / "followers_retweets.csv", [corpus.users[u].follower_count for u in active],
                        [str(forwarded[u]) for u in active], ("followers", "retweets"))

        days = list(corpus.cal.dates)
        pos = [sum(corpus.labels[t.tweet_id] is Sentiment.POSITIVE for t in corpus.tweets_by_day[d]) for d in days]
        neg = [sum(corpus.labels[t.tweet_id] is Sentiment.NEGATIVE for t in corpus.tweets_by_day[d]) for d in days]
        with (out / "sentiment_index.csv").open("w", encoding="utf-8") as fh:
            fh.write("date,positive,negative,index\n")
            if sum(pos) > 0 and sum(neg) > 0:
                for d, a, b, s in zip(days, pos, neg, market_sentiment_index(pos, neg)):
                    fh.write(f"{d.isoformat()},{a},{b},{float(s)!r}\n")

        graph = cumulative_cooccurrence(corpus.tweets)
        mentions = Counter(s for t in corpus.tweets for s in t.tickers)
        queried = [s for s, _ in sorted(mentions.items(), key=lambda kv: (-kv[1], kv[0]))[:top_stocks]]
        with (out / "cooccurrence_top5.csv").open("w", encoding="utf-8") as fh:
            fh.write("stock,rank,neighbor,count\n")
            for s in queried:
                for rank, (nb, n) in enumerate(top_cooccurring(graph, s, k), start=1):
                    fh.write(f"{s},{rank},{nb},{n}\n")
    return out


# -- report -----------------------------------------------------------------------


def render_report(cfg: PipelineConfig) -> str:
    path = cfg.output_dir / "report" / "summary.json"
    if not path.is_file():
        raise DataError(f"no report at {path}; run evaluate first")
    doc = json.loads(path.read_text(encoding="utf-8"))

    def f(v):
        return "   -  " if v is None else f"{v:.4f}"

    lines = [f"seed={doc['seed']} samples={doc['n_samples']}", "",
             f"{'model':<5} {'features':<32} {'n_test':>7} {'ACC':>7} {'AUC':>7} {'mACC':>7} {'mAUC':>7}"]
    for r in doc["rows"]:
        lines.append(f"{r['model']:<5} {'+'.join(r['groups']):<32} {r['n_test']:>7} {f(r['pooled_acc']):>7} "
                     f"{f(r['pooled_auc']):>7} {f(r['macro_acc']):>7} {f(r['macro_auc']):>7}")
    if doc.get("importance"):
        lines += ["", "feature importance (permutation, accuracy drop)"]
        for k, imp in enumerate(doc["importance"], start=1):
            lines.append(f"{k:>3}. {imp['feature']:<24} {imp['permutation_mean']:+.4f} "
                         f"(sd {imp['permutation_std']:.4f}, mdi {imp['impurity']:.4f})")
    return "\n".join(lines) + "\n"


def exit_code(exc: BaseException) -> int:
    """Map an exception to the documented process exit code."""
    if isinstance(exc, ConfigError):
        return 1
    if isinstance(exc, (DataError, FileNotFoundError)):
        return 2
    if isinstance(exc, InvariantError):
        return 3
    if isinstance(exc, InvestnetError):
        return 2
    return 3
