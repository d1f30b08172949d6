"""Shared fixtures: tiny hand-built records and a small synthetic dataset."""

from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone

import numpy as np
import pytest

from investnet.ingest import PriceBar, TradingCalendar, Tweet, User
from investnet.synth import SynthConfig, generate

CN = timezone(timedelta(hours=8))


def ts(d: date, hh: int, mm: int = 0, ss: int = 0) -> int:
    """UTC seconds for a wall-clock time in the market time zone."""
    return int(datetime.combine(d, time(hh, mm, ss), tzinfo=CN).timestamp())


def tweet(tid, author="u1", when=0, text="", tickers=(), parent=None) -> Tweet:
    return Tweet(tid, author, when, text, tuple(tickers), parent)


def weekdays(start: date, n: int) -> tuple[date, ...]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def bar_series(stock: str, days, closes, volume=1000.0, turnover=0.01, pe=10.0):
    return [PriceBar(stock, d, float(c), float(volume), float(turnover), pe) for d, c in zip(days, closes)]


@pytest.fixture
def cal():
    # Mon 2014-11-03 .. Fri 2014-11-14
    return TradingCalendar(weekdays(date(2014, 11, 3), 10))


@pytest.fixture
def users():
    return {u: User(u, 10, 5) for u in ("u1", "u2", "u3", "u4")}


SMALL_SYNTH = dict(n_stocks=10, n_users=400, n_days=60, tweets_per_stock_day=12.0, block_size=5,
                   spam_labels=600, corpus_per_class=150)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Ten stocks over three calendar months (Nov 2014 to Jan 2015)."""
    out = tmp_path_factory.mktemp("synth_small")
    summary = generate(SynthConfig(**SMALL_SYNTH, sentiment_signal=0.8, seed=7), out)
    return out, summary


# -- independent oracles ----------------------------------------------------------------

def random_edge_graph(rng, n_nodes, p_edge=0.1, p_dangling=0.2):
    """Random directed graph on ``u0..u{n-1}``; some nodes are forced to have no out-links."""
    from investnet.user_graph import UserGraph

    nodes = tuple(f"u{i:02d}" for i in range(n_nodes))
    dangling = rng.random(n_nodes) < p_dangling
    edges = {}
    for i in range(n_nodes):
        if dangling[i]:
            continue
        for j in range(n_nodes):
            if i != j and rng.random() < p_edge:
                edges[(nodes[i], nodes[j])] = int(rng.integers(1, 4))
    return UserGraph(date(2014, 11, 3), nodes, edges)


def dense_pagerank(nodes, edges, damping, weighted=False, iters=5000):
    """Google-matrix power iteration without any sparse bookkeeping."""
    n = len(nodes)
    idx = {u: i for i, u in enumerate(nodes)}
    A = np.zeros((n, n))
    for (a, b), w in edges.items():
        A[idx[b], idx[a]] = w if weighted else 1.0
    col = A.sum(axis=0)
    M = np.where(col > 0, A / np.where(col > 0, col, 1.0), 1.0 / n)
    G = damping * M + (1.0 - damping) / n
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        x_new = G @ x
        if np.abs(x_new - x).sum() < 1e-15:
            x = x_new
            break
        x = x_new
    return x / x.sum(), G


def kkt_margins(model, X, y):
    """(alpha, y_i f(x_i)) for every training row."""
    alpha = model.training_alphas(len(X))
    return alpha, np.asarray(y) * model.decision_function(X)


def kkt_satisfied(model, X, y, tol=1e-3, eps=1e-12):
    alpha, m = kkt_margins(model, X, y)
    C = model.C
    at_zero = alpha <= eps
    at_c = alpha >= C - eps
    free = ~at_zero & ~at_c
    return bool((m[at_zero] >= 1 - tol).all() and (m[at_c] <= 1 + tol).all()
                and (abs(m[free] - 1) <= tol).all())


def slsqp_dual(X, y, C, gamma):
    """Maximize the soft-margin dual with a general-purpose constrained solver."""
    from scipy.optimize import minimize

    from investnet.models.svm import rbf_kernel

    K = rbf_kernel(X, X, gamma)
    Q = (y[:, None] * y[None, :]) * K

    def neg(a):
        return 0.5 * a @ Q @ a - a.sum()

    def grad(a):
        return Q @ a - 1.0

    res = minimize(neg, np.zeros(len(y)), jac=grad, method="SLSQP", bounds=[(0, C)] * len(y),
                   constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
                   options={"ftol": 1e-14, "maxiter": 2000})
    return -res.fun, res.x


def _rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def gradient_check(seed, d=3, hidden=4, n=7, eps=1e-5):
    """Worst relative error between analytic and central-difference MLP gradients."""
    from investnet.models.mlp import init_params, loss_and_grad

    rng = np.random.default_rng(seed)
    p = init_params(d, hidden, rng)
    p["b1"] = rng.normal(size=hidden)
    p["b2"] = np.array(rng.normal())
    X = rng.normal(size=(n, d))
    t = rng.integers(0, 2, n).astype(float)
    _, g = loss_and_grad(p, X, t)
    worst = 0.0
    for k, v in p.items():
        flat = v.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = loss_and_grad(p, X, t)[0]
            flat[i] = old - eps
            lm = loss_and_grad(p, X, t)[0]
            flat[i] = old
            fd = (lp - lm) / (2 * eps)
            worst = max(worst, float(_rel_err(np.reshape(g[k], -1)[i], fd)))
    return worst


def planted_signal_run(workdir, rho, seed=0, threads=4, **synth):
    """Synthesize, build features and score stock-only vs full features, seed-paired.

    Returns {model: (stock_only_auc, full_auc, n_test)} using pooled test predictions.
    """
    from investnet import eval as ev
    from investnet import pipeline as pl
    from investnet.features import read_samples

    cfg = pl.load_config(None, seed=seed, threads=threads, output=str(workdir))
    cfg.synth = dict(synth, sentiment_signal=rho)
    pl.run_synth(cfg)
    path, _ = pl.run_features(cfg)
    samples = read_samples(path)
    groups = [("stock",), ("stock", "sentiment", "relatedness")]
    rows = ev.run_ablation(samples, groups, ("svm", "mlp"), cfg.models, seed, threads)
    by = {(r.model, r.groups): r for r in rows}
    return {m: (by[(m, groups[0])].pooled_auc, by[(m, groups[1])].pooled_auc, by[(m, groups[1])].n_test)
            for m in ("svm", "mlp")}


@pytest.fixture(scope="session")
def planted_runs(tmp_path_factory):
    """Memoized ``planted_signal_run`` on the default 50-stock, 120-day dataset; returns (result, seconds)."""
    import time as _time

    cache = {}

    def get(rho, seed=0):
        if (rho, seed) not in cache:
            t0 = _time.perf_counter()
            res = planted_signal_run(tmp_path_factory.mktemp("planted"), rho, seed)
            cache[(rho, seed)] = (res, _time.perf_counter() - t0)
        return cache[(rho, seed)]

    return get


# -- acceptance reporting ------------------------------------------------------------------

ACCEPTANCE_TITLES = {
    1: "PageRank matches dense oracle",
    2: "relatedness matches dense matrix form",
    3: "AUC matches pair counting",
    4: "MLP gradient check",
    5: "SVM KKT, dual and XOR",
    6: "planted-signal recovery",
    7: "power-law exponent recovery",
    8: "end-to-end determinism",
    9: "unit fixtures",
}
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
_other_failures: list[str] = []
_other_ran = [0]


def record_criterion(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid:
        if report.failed and report.when == "call":
            n = int(report.nodeid.rsplit("_", 1)[-1])
            if n not in ACCEPTANCE:
                ACCEPTANCE[n] = (False, f"did not complete: {report.longrepr.reprcrash.message[:120]}")
        return
    if report.when == "call":
        _other_ran[0] += 1
    if report.failed:
        _other_failures.append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    if 9 in ACCEPTANCE and _other_ran[0]:
        ok, detail = ACCEPTANCE[9]
        extra = f"; {_other_ran[0]} other tests, {len(_other_failures)} failed"
        ACCEPTANCE[9] = (ok and not _other_failures, detail + extra)
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        if n not in ACCEPTANCE:
            terminalreporter.write_line(f"SKIP  {n}. {title}: not selected")
            continue
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n}. {title}: {detail}")
