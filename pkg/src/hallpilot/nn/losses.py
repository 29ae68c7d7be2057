"""Loss functions: regression MSE, categorical CE, and the two weighted CE
variants used against label imbalance. All return (scalar loss, grad wrt the
prediction) with batch-mean reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over the batch; grad = 2 (pred - target) / N."""
    pred = np.asarray(pred)
    target = np.asarray(target).reshape(pred.shape)
    diff = pred - target
    n = pred.shape[0]
    loss = float((diff ** 2).sum() / n)
    return loss, 2.0 * diff / n


def loss_ce(logits: np.ndarray, target_bin: np.ndarray) -> tuple[float, np.ndarray]:
    """Softmax cross entropy; grad = (softmax - onehot) / N."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(target_bin).astype(int)
    p = softmax(logits)
    n = logits.shape[0]
    picked = np.clip(p[np.arange(n), targets], 1e-300, None)
    loss = float(-np.log(picked).mean())
    grad = p.copy()
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def loss_weighted_ce(logits: np.ndarray, target_bin: np.ndarray,
                     weights: np.ndarray) -> tuple[float, np.ndarray]:
    """CE scaled per sample by weights[target]."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(target_bin).astype(int)
    weights = np.asarray(weights, dtype=logits.dtype)
    p = softmax(logits)
    n = logits.shape[0]
    w = weights[targets]
    picked = np.clip(p[np.arange(n), targets], 1e-300, None)
    loss = float((w * -np.log(picked)).mean())
    grad = p.copy()
    grad[np.arange(n), targets] -= 1.0
    return loss, grad * w[:, None] / n


def loss_gaussian_ce(logits: np.ndarray, target_bin: np.ndarray,
                     sigma: float, lam: float) -> tuple[float, np.ndarray]:
    """CE plus a distance penalty pushing probability mass into a Gaussian
    bump around the target bin.

    L = -log p_target + lam * sum_j D(j, target) p_j with
    D(j, c) = 1 - exp(-(j - c)^2 / (2 sigma^2)).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(target_bin).astype(int)
    n, c = logits.shape
    p = softmax(logits)
    bins = np.arange(c)
    dist = 1.0 - np.exp(-((bins[None, :] - targets[:, None]) ** 2)
                        / (2.0 * sigma ** 2))          # (N, C)
    picked = np.clip(p[np.arange(n), targets], 1e-300, None)
    penalty = (dist * p).sum(axis=1)
    loss = float((-np.log(picked) + lam * penalty).mean())
    grad = p.copy()
    grad[np.arange(n), targets] -= 1.0
    grad += lam * p * (dist - penalty[:, None])
    return loss, grad / n


def inverse_freq_weights(hist: np.ndarray) -> np.ndarray:
    """Per-bin weights inversely proportional to bin frequency.

    w_c = N / (C_nonzero * n_c) for occupied bins, 0 for empty ones, so the
    dataset-mean weight is exactly 1: sum_c n_c w_c = N.
    """
    hist = np.asarray(hist, dtype=np.float64)
    total = hist.sum()
    if total <= 0:
        raise ValueError("all-zero histogram")
    nonzero = hist > 0
    weights = np.zeros_like(hist)
    weights[nonzero] = total / (nonzero.sum() * hist[nonzero])
    return weights


@dataclass
class LossSpec:
    """Declarative loss choice handed to the training loop."""

    kind: str                                   # mse | ce | weighted_ce | gaussian_ce
    n_bins: int = 15
    class_weights: list[float] | None = None
    sigma: float = 1.5
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mse", "ce", "weighted_ce", "gaussian_ce"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.class_weights is not None:
            if len(self.class_weights) != self.n_bins:
                raise ValueError("class_weights length must equal n_bins")
            if any(w < 0 for w in self.class_weights):
                raise ValueError("class_weights must be >= 0")

    @property
    def is_classification(self) -> bool:
        return self.kind != "mse"

    def compute(self, pred: np.ndarray, target) -> tuple[float, np.ndarray]:
        if self.kind == "mse":
            return loss_mse(pred, target)
        if self.kind == "ce":
            return loss_ce(pred, target)
        if self.kind == "weighted_ce":
            if self.class_weights is None:
                raise ValueError("weighted_ce needs class_weights")
            return loss_weighted_ce(pred, target, np.asarray(self.class_weights))
        return loss_gaussian_ce(pred, target, self.sigma, self.lam)
