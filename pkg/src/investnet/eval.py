"""Rolling monthly evaluation, metrics, ablations and descriptive fits."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import Sample, feature_columns, to_matrix
from .models import fit_scaler, grid_search_svm, train_forest, train_mlp, train_svm
from .models.forest import feature_importance

logger = logging.getLogger(__name__)

DEFAULT_ABLATIONS = (
    ("stock",),
    ("stock", "sentiment"),
    ("stock", "relatedness"),
    ("stock", "sentiment", "relatedness"),
)


# -- metrics ----------------------------------------------------------------------


def accuracy(labels: Sequence[float], predictions: Sequence[float]) -> float:
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions differ in length")
    if labels.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(labels == predictions))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # tie groups get the mean of their 1-based positions
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(labels: Sequence[float], scores: Sequence[float]) -> float | None:
    """Mann-Whitney AUC with ties counted one half; None if a class is absent."""
    y = np.asarray(labels) > 0
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    r = _average_ranks(s)
    u = r[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- splits -----------------------------------------------------------------------


@dataclass
class Split:
    train_month: str
    test_month: str
    train: list[Sample]
    test: list[Sample]

    def check_no_leakage(self) -> None:
        if self.train and self.test and max(s.day for s in self.train) >= min(s.day for s in self.test):
            raise AssertionError(f"split {self.train_month}->{self.test_month} leaks test dates into training")


def month_key(d) -> str:
    return f"{d.year:04d}-{d.month:02d}"


def make_rolling_splits(samples: Iterable[Sample], months: Sequence[str] | None = None) -> list[Split]:
    """Train on one calendar month, test on the next, for each consecutive pair.

    ``months`` fixes the month sequence (``YYYY-MM``); by default it spans the
    first to last sample month. Pairs with an empty side are skipped.
    """
    by_month: dict[str, list[Sample]] = {}
    for s in samples:
        by_month.setdefault(month_key(s.day), []).append(s)
    if months is None:
        if not by_month:
            raise ValueError("need at least 2 calendar months of samples")
        months = _month_range(min(by_month), max(by_month))
    months = list(months)
    if len(months) < 2:
        raise ValueError("need at least 2 calendar months of samples")
    splits = []
    for a, b in zip(months, months[1:]):
        train, test = by_month.get(a, []), by_month.get(b, [])
        if not train or not test:
            logger.warning("skipping split %s -> %s: empty %s month", a, b, "train" if not train else "test")
            continue
        split = Split(a, b, train, test)
        split.check_no_leakage()
        splits.append(split)
    return splits


def _month_range(first: str, last: str) -> list[str]:
    y, m = map(int, first.split("-"))
    out = []
    while f"{y:04d}-{m:02d}" <= last:
        out.append(f"{y:04d}-{m:02d}")
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


# -- model runs -------------------------------------------------------------------


@dataclass
class ModelConfig:
    svm_C: float = 1.0
    svm_gamma: float | None = None  # None -> 1/d
    svm_tol: float = 1e-3
    svm_max_passes: int = 200
    svm_grid_search: bool = False
    mlp_hidden: int = 16
    mlp_learning_rate: float = 0.05
    mlp_epochs: int = 300
    mlp_batch_size: int = 32
    forest_trees: int = 100
    forest_max_depth: int = 8
    importance_repeats: int = 10


def design(train: Sequence[Sample], test: Sequence[Sample], columns: Sequence[str]):
    """Impute, add a missing-P/E indicator, and standardize with training statistics."""
    Xtr, ytr = to_matrix(train, columns)
    Xte, yte = to_matrix(test, columns)
    names = list(columns)
    if "pe_ratio" in columns:
        c = names.index("pe_ratio")
        Xtr = np.column_stack([Xtr, np.isnan(Xtr[:, c]).astype(float)])
        Xte = np.column_stack([Xte, np.isnan(Xte[:, c]).astype(float)])
        names.append("pe_missing")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        med = np.nanmedian(Xtr, axis=0) if len(Xtr) else np.zeros(Xtr.shape[1])
    med = np.where(np.isnan(med), 0.0, med)
    Xtr = np.where(np.isnan(Xtr), med, Xtr)
    Xte = np.where(np.isnan(Xte), med, Xte)
    scaler = fit_scaler(Xtr, names)
    kept = [names[i] for i in scaler.keep]
    return scaler.transform(Xtr), ytr, scaler.transform(Xte), yte, kept


def fit_predict(model: str, Xtr, ytr, Xte, cfg: ModelConfig, seed: int):
    """Train ``model`` and return (hard labels, ranking scores) on ``Xte``."""
    if model == "svm":
        C, gamma = cfg.svm_C, cfg.svm_gamma
        if cfg.svm_grid_search:
            C, gamma = grid_search_svm(Xtr, ytr, tol=cfg.svm_tol)
        m = train_svm(Xtr, ytr, C=C, gamma=gamma, tol=cfg.svm_tol, max_passes=cfg.svm_max_passes)
        score = m.decision_function(Xte)
        return np.where(score > 0, 1, -1), score
    if model == "mlp":
        m = train_mlp(Xtr, ytr, hidden=cfg.mlp_hidden, learning_rate=cfg.mlp_learning_rate,
                      epochs=cfg.mlp_epochs, seed=seed, batch_size=cfg.mlp_batch_size)
        p = m.predict_proba(Xte)
        return np.where(p >= 0.5, 1, -1), p
    raise ValueError(f"unknown model {model!r}")


@dataclass
class SplitResult:
    train_month: str
    test_month: str
    n_train: int
    n_test: int
    acc: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    labels: list[int] = field(default_factory=list, repr=False)
    scores: list[float] = field(default_factory=list, repr=False)


@dataclass
class EvalRow:
    model: str
    groups: tuple[str, ...]
    splits: list[SplitResult]

    @property
    def n_test(self) -> int:
        return sum(s.n_test for s in self.splits)

    @property
    def pooled_acc(self) -> float | None:
        if not self.splits:
            return None
        return (sum(s.tp + s.tn for s in self.splits)) / self.n_test

    @property
    def pooled_auc(self) -> float | None:
        labels = [v for s in self.splits for v in s.labels]
        scores = [v for s in self.splits for v in s.scores]
        return auc(labels, scores) if labels else None

    @property
    def macro_acc(self) -> float | None:
        return float(np.mean([s.acc for s in self.splits])) if self.splits else None

    @property
    def macro_auc(self) -> float | None:
        vals = [s.auc for s in self.splits if s.auc is not None]
        return float(np.mean(vals)) if vals else None


@dataclass
class EvalReport:
    seed: int
    rows: list[EvalRow]
    importance: list = field(default_factory=list)
    n_samples: int = 0

    def row(self, model: str, groups: Iterable[str]) -> EvalRow:
        key = tuple(sorted(groups))
        for r in self.rows:
            if r.model == model and tuple(sorted(r.groups)) == key:
                return r
        raise KeyError((model, key))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_samples": self.n_samples,
            "rows": [{
                "model": r.model,
                "groups": list(r.groups),
                "n_test": r.n_test,
                "pooled_acc": r.pooled_acc,
                "pooled_auc": r.pooled_auc,
                "macro_acc": r.macro_acc,
                "macro_auc": r.macro_auc,
                "splits": [{k: v for k, v in asdict(s).items() if k not in ("labels", "scores")}
                           for s in r.splits],
            } for r in self.rows],
            "importance": [asdict(i) for i in self.importance],
        }


def evaluate_split(split: Split, model: str, groups: Sequence[str], cfg: ModelConfig, seed: int) -> SplitResult:
    Xtr, ytr, Xte, yte, _ = design(split.train, split.test, feature_columns(groups))
    if len(np.unique(ytr)) < 2:
        logger.warning("split %s -> %s has a single training class; predicting it", split.train_month,
                       split.test_month)
        pred = np.full(len(yte), ytr[0])
        score = np.zeros(len(yte))
    else:
        pred, score = fit_predict(model, Xtr, ytr, Xte, cfg, seed)
    y = yte.astype(int)
    pred = pred.astype(int)
    return SplitResult(
        split.train_month, split.test_month, len(ytr), len(yte), accuracy(y, pred), auc(y, score),
        int(np.sum((pred == 1) & (y == 1))), int(np.sum((pred == 1) & (y == -1))),
        int(np.sum((pred == -1) & (y == -1))), int(np.sum((pred == -1) & (y == 1))),
        y.tolist(), [float(v) for v in score],
    )


def split_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_ablation(samples: Sequence[Sample], groups_list: Sequence[Sequence[str]] = DEFAULT_ABLATIONS,
                 models: Sequence[str] = ("svm", "mlp"), cfg: ModelConfig | None = None, seed: int = 0,
                 threads: int = 1, splits: Sequence[Split] | None = None) -> list[EvalRow]:
    """Evaluate every (model, feature-group set) on the same splits and seeds."""
    if not groups_list:
        raise ValueError("empty feature group set")
    cfg = cfg or ModelConfig()
    splits = list(splits) if splits is not None else make_rolling_splits(samples)
    tasks = [(m, tuple(g), k, sp) for m in models for g in groups_list for k, sp in enumerate(splits)]
    for _, g, _, _ in tasks:
        feature_columns(g)

    def work(task):
        m, g, k, sp = task
        return evaluate_split(sp, m, g, cfg, split_seed(seed, k))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    rows = []
    it = iter(results)
    for m in models:
        for g in groups_list:
            rows.append(EvalRow(m, tuple(g), [next(it) for _ in splits]))
    return rows


def forest_importance(samples: Sequence[Sample], cfg: ModelConfig | None = None, seed: int = 0,
                      splits: Sequence[Split] | None = None):
    """Permutation importance of all features; train on all but the last split's test month."""
    cfg = cfg or ModelConfig()
    splits = list(splits) if splits is not None else make_rolling_splits(samples)
    if not splits:
        return []
    last = splits[-1]
    train = [s for s in samples if s.day < min(x.day for x in last.test)]
    Xtr, ytr, Xva, yva, names = design(train, last.test, feature_columns(("stock", "sentiment", "relatedness")))
    if len(np.unique(ytr)) < 2:
        return []
    model = train_forest(Xtr, ytr, n_trees=cfg.forest_trees, max_depth=cfg.forest_max_depth, seed=seed)
    return feature_importance(model, Xva, yva, names, n_repeats=cfg.importance_repeats, seed=seed)


# -- power-law fit ----------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    r2: float
    x_min: float
    x_max: float
    n_points: int


def ccdf_points(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values and the empirical P(X >= x) at each."""
    v = np.sort(np.asarray(values, dtype=float))
    xs, first = np.unique(v, return_index=True)
    return xs, (len(v) - first) / len(v)


def fit_power_law_ccdf(values: Sequence[float], x_max: float = 1e4, x_min: float = 1.0) -> PowerLawFit:
    """Least-squares slope of log10 CCDF against log10 x over ``[x_min, x_max]``."""
    v = np.asarray(values, dtype=float)
    v = v[v > 0]
    xs, cc = ccdf_points(v)
    if len(xs) < 10:
        raise ValueError(f"need at least 10 distinct positive values, got {len(xs)}")
    keep = (xs >= x_min) & (xs <= x_max)
    if keep.sum() < 2:
        raise ValueError("fewer than 2 distinct values inside the fit range")
    lx, ly = np.log10(xs[keep]), np.log10(cc[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(r2), float(xs[keep][0]), float(xs[keep][-1]), int(keep.sum()))


# -- report files -----------------------------------------------------------------


def _num(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(report: EvalReport, outdir) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    paths = {"summary": outdir / "summary.json", "splits": outdir / "splits.csv",
             "ablation": outdir / "ablation.csv", "predictions": outdir / "predictions.csv"}
    paths["summary"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with paths["splits"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "groups", "train_month", "test_month", "n_train", "n_test", "acc", "auc",
                    "tp", "fp", "tn", "fn"])
        for r in report.rows:
            for s in r.splits:
                w.writerow([r.model, "+".join(r.groups), s.train_month, s.test_month, s.n_train, s.n_test,
                            _num(s.acc), _num(s.auc), s.tp, s.fp, s.tn, s.fn])
    with paths["ablation"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "groups", "n_test", "pooled_acc", "pooled_auc", "macro_acc", "macro_auc"])
        for r in report.rows:
            w.writerow([r.model, "+".join(r.groups), r.n_test, _num(r.pooled_acc), _num(r.pooled_auc),
                        _num(r.macro_acc), _num(r.macro_auc)])
    with paths["predictions"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "groups", "test_month", "label", "score"])
        for r in report.rows:
            for s in r.splits:
                for lab, sc in zip(s.labels, s.scores):
                    w.writerow([r.model, "+".join(r.groups), s.test_month, lab, repr(sc)])
    if report.importance:
        paths["importance"] = outdir / "importance.csv"
        with paths["importance"].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "permutation_mean", "permutation_std", "impurity"])
            for k, imp in enumerate(report.importance, start=1):
                w.writerow([k, imp.feature, repr(imp.permutation_mean), repr(imp.permutation_std),
                            repr(imp.impurity)])
    return paths


def write_series(path, xs: Iterable, ys: Iterable, header: tuple[str, str] = ("x", "y")) -> None:
    """Plot-ready two-column file, one ``x,y`` pair per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{header[0]},{header[1]}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{x},{_num(float(y)) if not isinstance(y, str) else y}\n")
