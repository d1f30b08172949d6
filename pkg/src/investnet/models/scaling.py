from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scaler:
    """Standardizes with training-window statistics; constant columns are dropped."""

    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray  # indices of retained input columns

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X[:, self.keep] - self.mean) / self.std


def fit_scaler(X: np.ndarray, names=None) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need at least 2 training rows to fit a scaler")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = np.flatnonzero(std > 0)
    if len(keep) < X.shape[1]:
        dropped = [names[i] if names is not None else str(i) for i in np.flatnonzero(std == 0)]
        logger.info("dropping constant feature(s): %s", ", ".join(dropped))
    return Scaler(mean[keep], std[keep], keep)


def apply_scaler(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    return scaler.transform(X)
