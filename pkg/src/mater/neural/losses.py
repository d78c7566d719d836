"""Training losses: class-weighted cross-entropy and concordance correlation."""

from __future__ import annotations

import numpy as np

from .layers import log_softmax, softmax

SIMPLEX_TOL = 1e-9


def class_weights(targets, n_classes: int | None = None) -> np.ndarray:
    """Inverse-frequency weights ``N / (K * N_c)`` from (soft or one-hot) targets.

    Classes with no mass get weight 1.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    k = targets.shape[1] if n_classes is None else n_classes
    counts = targets.sum(axis=0)
    n = targets.shape[0]
    return np.where(counts > 0, n / (k * np.where(counts > 0, counts, 1.0)), 1.0)


def _check_target(target) -> np.ndarray:
    q = np.asarray(target, dtype=np.float64)
    if (q < -SIMPLEX_TOL).any() or abs(q.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"target is not on the probability simplex (sum={q.sum()!r})")
    return q


def weighted_ce(logits, target, weights=None) -> float:
    """``-sum_c w_c q_c log softmax(logits)_c``.

    ``target`` is a distribution over classes or an integer class index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if np.ndim(target) == 0:
        q = np.zeros(logits.shape[-1])
        q[int(target)] = 1.0
    else:
        q = _check_target(target)
    w = np.ones_like(q) if weights is None else np.asarray(weights, dtype=np.float64)
    if (w <= 0).any():
        raise ValueError("class weights must be positive")
    return float(-(w * q * log_softmax(logits)).sum())


def weighted_ce_grad(logits, target, weights=None) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if np.ndim(target) == 0:
        q = np.zeros(logits.shape[-1])
        q[int(target)] = 1.0
    else:
        q = np.asarray(target, dtype=np.float64)
    w = np.ones_like(q) if weights is None else np.asarray(weights, dtype=np.float64)
    wq = w * q
    return softmax(logits) * wq.sum() - wq


def ccc(x, y) -> float:
    """Concordance correlation coefficient with population moments.

    Returns 1 when both sequences are the same constant (zero denominator).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("ccc needs two 1-D sequences of length >= 2")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    sxy = np.mean(dx * dy)
    den = np.mean(dx * dx) + np.mean(dy * dy) + (mx - my) ** 2
    if den == 0.0:
        return 1.0
    return float(2.0 * sxy / den)


def ccc_grad(x, y) -> np.ndarray:
    """Gradient of ``ccc(x, y)`` with respect to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    num = 2.0 * np.mean(dx * dy)
    den = np.mean(dx * dx) + np.mean(dy * dy) + (mx - my) ** 2
    if den == 0.0:
        return np.zeros(n)
    dnum = 2.0 * dy / n
    dden = 2.0 * dx / n + 2.0 * (mx - my) / n
    return (dnum * den - num * dden) / (den * den)


def ccc_loss(pred, target) -> float:
    """``1 - ccc`` averaged over output columns; rows are samples."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean([1.0 - ccc(pred[:, d], target[:, d]) for d in range(pred.shape[1])]))


def ccc_loss_grad(pred, target) -> np.ndarray:
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    k = pred.shape[1]
    return np.stack([-ccc_grad(pred[:, d], target[:, d]) / k for d in range(k)], axis=1)
