"""RBF-kernel SVM trained by sequential minimal optimization.

Pairs are chosen as the maximal KKT-violating pair under second-order
selection, so training stops exactly when the gap between the most violating
multipliers falls below ``tol``; at that point every training point satisfies
the KKT conditions to within ``tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from ..persist import dump_model, load_model

logger = logging.getLogger(__name__)

_TAU = 1e-12
_FULL_KERNEL_MAX = 4000


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelRows:
    """Row access to the training kernel, precomputed when small enough."""

    def __init__(self, X, gamma, cache_rows=1024):
        self.X, self.gamma = X, gamma
        self.full = rbf_kernel(X, X, gamma) if len(X) <= _FULL_KERNEL_MAX else None
        self.cache: dict[int, np.ndarray] = {}
        self.cache_rows = cache_rows

    def __getitem__(self, i):
        if self.full is not None:
            return self.full[i]
        row = self.cache.get(i)
        if row is None:
            if len(self.cache) >= self.cache_rows:
                self.cache.pop(next(iter(self.cache)))
            row = self.cache[i] = rbf_kernel(self.X[i], self.X, self.gamma)[0]
        return row


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for each support vector
    bias: float
    gamma: float
    C: float
    n_iter: int = 0
    converged: bool = True
    objective_history: list[float] = field(default_factory=list, repr=False)
    support: np.ndarray | None = field(default=None, repr=False)  # training-row indices of the SVs

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def training_alphas(self, n: int) -> np.ndarray:
        """Dual multipliers for all ``n`` training rows (zero off the support set)."""
        if self.support is None:
            raise ValueError("support indices are not stored for reloaded models")
        a = np.zeros(n)
        a[self.support] = self.alphas
        return a

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        if len(self.support_vectors) == 0:
            return np.full(len(X), self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1)

    def save(self, path) -> None:
        dump_model("svm", {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias, "gamma": self.gamma, "C": self.C,
        }, path)

    @classmethod
    def load(cls, path) -> "SvmModel":
        doc = load_model("svm", path)
        sv = np.array(doc["support_vectors"], dtype=float)
        return cls(sv.reshape(len(doc["dual_coef"]), -1), np.array(doc["dual_coef"], dtype=float),
                   float(doc["bias"]), float(doc["gamma"]), float(doc["C"]))


def _snap(a: float, C: float) -> float:
    eps = 1e-12 * C
    if a <= eps:
        return 0.0
    if a >= C - eps:
        return C
    return a


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def train_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, gamma: float | None = None,
              tol: float = 1e-3, max_passes: int = 200, track_objective: bool = False) -> SvmModel:
    """Fit the soft-margin dual with box constraint ``C``.

    ``gamma`` defaults to 1/d. ``max_passes`` caps the number of pair updates
    at ``max_passes * n``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if len(y) != n:
        raise ValueError("X and y differ in length")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be +1/-1")
    if len(np.unique(y)) < 2:
        raise ModelError("SVM training data contains a single class")
    if C <= 0:
        raise ValueError("C must be > 0")
    gamma = 1.0 / d if gamma is None else float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be > 0")

    K = _KernelRows(X, gamma)
    diag = np.ones(n)  # RBF: k(x, x) = 1
    alpha = np.zeros(n)
    # F_t = sum_s alpha_s y_s K_ts - y_t  (prediction error without bias)
    F = -y.copy()
    history = []
    if track_objective:
        history.append(0.0)

    max_iter = max_passes * n
    it = 0
    converged = False
    pos = y > 0
    while it < max_iter:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        F_up = np.where(up, F, np.inf)
        i = int(np.argmin(F_up))
        f_min = F_up[i]
        F_low = np.where(low, F, -np.inf)
        f_max = F_low.max()
        if f_max - f_min < tol:
            converged = True
            break
        Ki = K[i]
        # second-order choice of j among violators in I_low
        b = F - f_min
        a = np.maximum(diag[i] + diag - 2.0 * Ki, _TAU)
        gain = np.where(low & (b > 0), b * b / a, -np.inf)
        j = int(np.argmax(gain))
        Kj = K[j]
        yi, yj = y[i], y[j]
        ai, aj = alpha[i], alpha[j]
        if yi != yj:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        eta = max(diag[i] + diag[j] - 2.0 * Ki[j], _TAU)
        aj_new = min(max(aj + yj * (F[i] - F[j]) / eta, L), H)
        ai_new = ai + yi * yj * (aj - aj_new)
        # snap round-off residue onto the box so bound membership stays exact
        ai_new, aj_new = _snap(ai_new, C), _snap(aj_new, C)
        dai, daj = ai_new - ai, aj_new - aj
        it += 1
        if dai == 0.0 and daj == 0.0:
            logger.debug("SMO stalled on pair (%d, %d)", i, j)
            break
        alpha[i], alpha[j] = ai_new, aj_new
        F += yi * dai * Ki + yj * daj * Kj
        if track_objective:
            history.append(float(alpha.sum() - 0.5 * np.dot(alpha * y, F + y)))

    if not converged:
        logger.warning("SMO stopped after %d updates without reaching tol=%g", it, tol)

    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(np.mean(-F[free]))
    else:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        hi = -F[up].min() if up.any() else 0.0
        lo = -F[low].max() if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    sv = alpha > 0
    return SvmModel(X[sv].copy(), (alpha * y)[sv], bias, gamma, float(C), it, converged, history,
                    np.flatnonzero(sv))


def grid_search_svm(X: np.ndarray, y: np.ndarray, Cs=(0.1, 1.0, 10.0), gamma_scales=(0.1, 1.0, 10.0),
                    holdout: float = 0.25, tol: float = 1e-3) -> tuple[float, float]:
    """Pick (C, gamma) by AUC on the chronologically last ``holdout`` share of the rows."""
    from ..eval import auc

    n, d = X.shape
    cut = int(round(n * (1 - holdout)))
    Xtr, ytr, Xva, yva = X[:cut], y[:cut], X[cut:], y[cut:]
    best, best_score = (1.0, 1.0 / d), -np.inf
    if len(np.unique(ytr)) < 2 or len(np.unique(yva)) < 2:
        return best
    for C in Cs:
        for s in gamma_scales:
            m = train_svm(Xtr, ytr, C=C, gamma=s / d, tol=tol)
            score = auc(yva, m.decision_function(Xva))
            if score is not None and score > best_score:
                best, best_score = (C, s / d), score
    return best
