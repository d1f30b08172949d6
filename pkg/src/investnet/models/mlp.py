"""One-hidden-layer sigmoid network trained by backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from ..persist import dump_model, load_model


def sigmoid(z):
    # tanh form is exact at 0 and never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpModel:
    W1: np.ndarray  # (d, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: float
    losses: list[float] = field(default_factory=list, repr=False)

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array(self.b2)}

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.W1.shape[0]:
            raise ValueError(f"expected {self.W1.shape[0]} features, got {X.shape[1]}")
        h = sigmoid(X @ self.W1 + self.b1)
        return sigmoid(h @ self.w2 + self.b2)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.predict_proba(X) >= 0.5, 1, -1)

    def save(self, path) -> None:
        dump_model("mlp", {"W1": self.W1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(),
                           "b2": float(self.b2)}, path)

    @classmethod
    def load(cls, path) -> "MlpModel":
        doc = load_model("mlp", path)
        b1 = np.array(doc["b1"], dtype=float)
        W1 = np.array(doc["W1"], dtype=float).reshape(-1, len(b1))
        return cls(W1, b1, np.array(doc["w2"], dtype=float), float(doc["b2"]))


def loss_and_grad(params: dict[str, np.ndarray], X: np.ndarray, t: np.ndarray):
    """Mean binary cross-entropy and its gradient; targets ``t`` in {0, 1}."""
    W1, b1, w2, b2 = params["W1"], params["b1"], params["w2"], float(params["b2"])
    h = sigmoid(X @ W1 + b1)
    z = h @ w2 + b2
    loss = float(np.mean(np.logaddexp(0.0, z) - t * z))
    n = len(X)
    delta2 = (sigmoid(z) - t) / n
    delta1 = np.outer(delta2, w2) * h * (1.0 - h)
    grads = {
        "W1": X.T @ delta1,
        "b1": delta1.sum(axis=0),
        "w2": h.T @ delta2,
        "b2": np.array(delta2.sum()),
    }
    return loss, grads


def init_params(d: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    return {
        "W1": rng.uniform(-lim1, lim1, size=(d, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.uniform(-lim2, lim2, size=hidden),
        "b2": np.array(0.0),
    }


def train_mlp(X: np.ndarray, y: np.ndarray, hidden: int = 16, learning_rate: float = 0.05,
              epochs: int = 300, seed: int = 0, batch_size: int = 32) -> MlpModel:
    """Mini-batch gradient descent on cross-entropy; labels in {+1, -1}.

    ``losses[0]`` is the full-batch loss at initialization and ``losses[k]`` the
    loss after epoch ``k``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("X and y must be non-empty and equal length")
    t = (y > 0).astype(float)
    rng = np.random.default_rng(seed)
    p = init_params(X.shape[1], hidden, rng)
    losses = [loss_and_grad(p, X, t)[0]]
    n = len(X)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, g = loss_and_grad(p, X[idx], t[idx])
            for k in p:
                p[k] = p[k] - learning_rate * g[k]
        loss = loss_and_grad(p, X, t)[0]
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        losses.append(loss)
    return MlpModel(p["W1"], p["b1"], p["w2"], float(p["b2"]), losses)
