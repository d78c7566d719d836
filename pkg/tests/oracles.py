"""Independent reference implementations used as test oracles.

These are deliberately naive (explicit loops, ``math.fsum``) and share no
code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def rank_uncertainty_bruteforce(models):
    """Literal rank-ensemble transcription.

    For every model i, category c and sample j the uncertainty is the
    1-based position of p[j, c] when column c is sorted high-to-low, tied
    entries sharing the mean of their positions. Uncertainties are averaged
    over models; the label is the first category with the smallest average.
    """
    n = len(models)
    m = len(models[0])
    k = len(models[0][0])
    total = [[0.0] * k for _ in range(m)]
    for P in models:
        for c in range(k):
            for j in range(m):
                higher = sum(1 for jj in range(m) if P[jj][c] > P[j][c])
                equal = sum(1 for jj in range(m) if P[jj][c] == P[j][c])
                # positions higher+1 .. higher+equal, averaged
                rank = higher + (equal + 1) / 2.0
                total[j][c] += rank
    avg = [[total[j][c] / n for c in range(k)] for j in range(m)]
    labels = []
    for j in range(m):
        best = 0
        for c in range(1, k):
            if avg[j][c] < avg[j][best]:
                best = c
        labels.append(best)
    return labels, avg


def confusion_scores(preds, golds, classes):
    """Macro-F1 over gold-present classes and accuracy, both in percent, from a confusion matrix."""
    idx = {c: i for i, c in enumerate(classes)}
    K = len(classes)
    cm = [[0] * K for _ in range(K)]
    for p, g in zip(preds, golds):
        cm[idx[g]][idx[p]] += 1
    f1s = []
    for c in range(K):
        support = sum(cm[c])
        if support == 0:
            continue
        tp = cm[c][c]
        predicted = sum(cm[r][c] for r in range(K))
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        f1s.append(0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall))
    correct = sum(cm[c][c] for c in range(K))
    return 100.0 * sum(f1s) / len(f1s), 100.0 * correct / len(preds)


def ccc_direct(x, y):
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    den = vx + vy + (mx - my) ** 2
    return 1.0 if den == 0 else 2 * cov / den


def numeric_grad(f, x, eps=1e-5, index=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (modified in place, then restored).

    ``index`` restricts the evaluation to a subset of flat positions; other
    entries are left as NaN.
    """
    flat = x.reshape(-1)
    out = np.full(flat.shape, np.nan)
    positions = range(flat.size) if index is None else index
    for i in positions:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(x.shape)


def max_rel_err(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def nccf_direct(frame, lag):
    a = [float(v) for v in frame[: len(frame) - lag]]
    b = [float(v) for v in frame[lag:]]
    num = math.fsum(p * q for p, q in zip(a, b))
    den = math.sqrt(math.fsum(p * p for p in a) * math.fsum(q * q for q in b))
    return num / den if den > 0 else 0.0


def dft_band_energy(frame, sample_rate, lo, hi):
    """Band energy of the Hann-windowed frame by an explicit DFT sum."""
    n = len(frame)
    w = [0.5 - 0.5 * math.cos(2 * math.pi * i / (n - 1)) for i in range(n)]
    x = [float(frame[i]) * w[i] for i in range(n)]
    total = 0.0
    for k in range(n // 2 + 1):
        f = k * sample_rate / n
        if lo <= f < hi:
            re = math.fsum(x[i] * math.cos(2 * math.pi * k * i / n) for i in range(n))
            im = math.fsum(x[i] * math.sin(2 * math.pi * k * i / n) for i in range(n))
            total += re * re + im * im
    return total
