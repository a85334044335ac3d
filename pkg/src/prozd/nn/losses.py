"""Mean squared error and clamped cross-entropy, as plain functions and as tensor ops."""

from __future__ import annotations

import numpy as np

from prozd.nn.tensor import Tensor

LOG_CLAMP = 1e-12


def _one_hot(target: np.ndarray, n_classes: int) -> np.ndarray:
    target = np.asarray(target)
    if target.ndim == 1:
        idx = target.astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= n_classes):
            raise ValueError(f"class index outside 0..{n_classes - 1}")
        out = np.zeros((len(idx), n_classes))
        out[np.arange(len(idx)), idx] = 1.0
        return out
    return target.astype(np.float64)


def mse(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty batch")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / pred.size


def cross_entropy(probs, target, weights=None) -> tuple[float, np.ndarray]:
    """Mean over rows of -sum(target * log(max(p, clamp))).

    ``target`` is either one-hot rows or a vector of class indices; optional
    ``weights`` scale each row's contribution.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("empty batch" if probs.size == 0 else "cross_entropy expects (batch, classes)")
    t = _one_hot(target, probs.shape[1])
    if t.shape != probs.shape:
        raise ValueError(f"cross_entropy shape mismatch {probs.shape} vs {t.shape}")
    w = np.ones(len(probs)) if weights is None else np.asarray(weights, dtype=np.float64)
    norm = w.sum()
    clamped = np.maximum(probs, LOG_CLAMP)
    value = float(-(w[:, None] * t * np.log(clamped)).sum() / norm)
    grad = np.where(probs >= LOG_CLAMP, -w[:, None] * t / clamped, 0.0) / norm
    return value, grad


def loss(kind: str, pred, target) -> tuple[float, np.ndarray]:
    if kind == "mse":
        return mse(pred, target)
    if kind == "cross_entropy":
        return cross_entropy(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")


def mse_loss(pred: Tensor, target) -> Tensor:
    value, grad = mse(pred.data, target)
    return Tensor(value, (pred,), lambda g: pred._accumulate(g * grad))


def cross_entropy_loss(probs: Tensor, target, weights=None) -> Tensor:
    value, grad = cross_entropy(probs.data, target, weights)
    return Tensor(value, (probs,), lambda g: probs._accumulate(g * grad))
