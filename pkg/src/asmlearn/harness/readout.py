"""Multinomial logistic readout trained by mini-batch gradient descent."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class ReadoutDivergence(RuntimeError):
    pass


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(W, b, X, y, l2=0.0):
    """Mean cross-entropy of softmax(X W + b) and its gradients w.r.t. W and b."""
    n = X.shape[0]
    probs = softmax(X @ W + b)
    loss = -np.log(np.clip(probs[np.arange(n), y], 1e-300, None)).mean() + 0.5 * l2 * (W * W).sum()
    d = probs
    d[np.arange(n), y] -= 1.0
    d /= n
    return loss, X.T @ d + l2 * W, d.sum(axis=0)


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        return cls(mean, np.where(std > 1e-12, std, 1.0))

    def __call__(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


@dataclass
class LinearReadout:
    W: np.ndarray
    b: np.ndarray
    standardizer: Standardizer | None
    losses: list

    def scores(self, X):
        X = self.standardizer(X) if self.standardizer is not None else np.asarray(X, dtype=np.float64)
        return X @ self.W + self.b

    def predict(self, X, batch=4096):
        return np.concatenate([self.scores(X[i:i + batch]).argmax(axis=1) for i in range(0, len(X), batch)])

    def accuracy(self, X, y):
        return float((self.predict(X) == np.asarray(y)).mean())


def train_linear_readout(features, labels, rng, epochs=30, learning_rate=0.1, batch_size=128,
                         n_classes=None, standardize=True, l2=0.0) -> LinearReadout:
    """Fit a softmax layer; step size decays as learning_rate / sqrt(epoch)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    c = int(y.max()) + 1 if n_classes is None else n_classes
    std = Standardizer.fit(X) if standardize else None
    if std is not None:
        X = std(X)
    W = np.zeros((X.shape[1], c))
    b = np.zeros(c)
    losses = []
    for epoch in range(1, epochs + 1):
        lr = learning_rate / np.sqrt(epoch)
        order = rng.permutation(X.shape[0])
        total = 0.0
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gW, gb = loss_and_grad(W, b, X[idx], y[idx], l2)
            if not np.isfinite(loss):
                raise ReadoutDivergence(
                    f"non-finite loss at epoch {epoch}, batch {lo // batch_size}; "
                    f"learning rate {lr:.3g} too large? |W|max={np.abs(W).max():.3g}")
            W -= lr * gW
            b -= lr * gb
            total += loss * len(idx)
        losses.append(total / len(order))
        log.debug("epoch %d loss %.6g", epoch, losses[-1])
    return LinearReadout(W=W, b=b, standardizer=std, losses=losses)
