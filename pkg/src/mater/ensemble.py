"""Combining per-model class-probability matrices.

The uncertainty-aware strategy replaces each model's probabilities by their
rank within the category column across the evaluated samples (rank 1 = the
sample the model is most confident about), averages ranks over models and
picks the category with the smallest average rank. Because only ranks enter,
any strictly increasing recalibration of one model's column leaves the
result unchanged, unlike probability averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .labels import CATEGORIES

SIMPLEX_TOL = 1e-6
TIE_BREAKS = ("order", "probability")


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class ProbMatrix:
    """An m x k probability matrix from one model, rows on the simplex."""

    probs: np.ndarray
    model_id: str = ""
    categories: tuple[str, ...] = CATEGORIES

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise EnsembleError(f"{self.model_id or 'model'}: expected a non-empty 2-D matrix, got shape {p.shape}")
        if p.shape[1] != len(self.categories):
            raise EnsembleError(f"{self.model_id or 'model'}: {p.shape[1]} columns for {len(self.categories)} categories")
        if not np.all(np.isfinite(p)) or (p < -SIMPLEX_TOL).any():
            raise EnsembleError(f"{self.model_id or 'model'}: probabilities must be finite and non-negative")
        bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > SIMPLEX_TOL)
        if bad.size:
            raise EnsembleError(f"{self.model_id or 'model'}: row {bad[0]} does not sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True)
class EnsemblePrediction:
    labels: np.ndarray  # column indices into ``categories``
    avg_uncertainty: np.ndarray
    categories: tuple[str, ...] = CATEGORIES

    @property
    def label_names(self) -> list[str]:
        return [self.categories[i] for i in self.labels]


def _stack(models) -> tuple[np.ndarray, tuple[str, ...]]:
    """(n, m, k) score array plus the shared category order.

    Accepts ``ProbMatrix`` objects or plain 2-D arrays (scores need not be
    normalized for the rank strategy).
    """
    models = list(models)
    if not models:
        raise EnsembleError("need at least one model")
    mats, orders = [], []
    for i, mdl in enumerate(models):
        if isinstance(mdl, ProbMatrix):
            mats.append(mdl.probs)
            orders.append(mdl.categories)
        else:
            a = np.asarray(mdl, dtype=np.float64)
            if a.ndim != 2 or a.shape[0] < 1:
                raise EnsembleError(f"model {i}: expected a non-empty 2-D matrix, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise EnsembleError(f"model {i}: non-finite scores")
            mats.append(a)
            orders.append(None)
    shape = mats[0].shape
    for i, a in enumerate(mats):
        if a.shape != shape:
            raise EnsembleError(f"model {i}: shape {a.shape} differs from {shape}")
    named = {o for o in orders if o is not None}
    if len(named) > 1:
        raise EnsembleError("models disagree on category order")
    cats = named.pop() if named else (CATEGORIES if shape[1] == len(CATEGORIES) else tuple(str(c) for c in range(shape[1])))
    return np.stack(mats), cats


def rank_probs(probs) -> np.ndarray:
    """Per-column descending ranks, 1 = highest value; ties share their average rank."""
    p = probs.probs if isinstance(probs, ProbMatrix) else np.asarray(probs, dtype=np.float64)
    return _kernels.column_ranks(np.ascontiguousarray(p))


def _argbest(scores: np.ndarray, secondary: np.ndarray | None, lowest: bool) -> np.ndarray:
    """Row-wise argmin/argmax; exact ties go to the larger ``secondary``, then the first column."""
    best = scores.min(axis=1, keepdims=True) if lowest else scores.max(axis=1, keepdims=True)
    tied = scores == best
    if secondary is None:
        return np.argmax(tied, axis=1)
    sec = np.where(tied, secondary, -np.inf)
    return np.argmax(sec == sec.max(axis=1, keepdims=True), axis=1)


def uncertainty_ensemble(models, tie_break: str = "order") -> EnsemblePrediction:
    """Rank-based ensemble: label = argmin over categories of the model-averaged rank.

    ``tie_break="order"`` resolves equal average ranks by category order and
    keeps the labels invariant under monotone recalibration;
    ``"probability"`` first prefers the higher mean probability.
    """
    if tie_break not in TIE_BREAKS:
        raise EnsembleError(f"tie_break must be one of {TIE_BREAKS}")
    P, cats = _stack(models)
    avg = np.mean([rank_probs(p) for p in P], axis=0)
    secondary = P.mean(axis=0) if tie_break == "probability" else None
    return EnsemblePrediction(_argbest(avg, secondary, lowest=True), avg, cats)


def averaging_ensemble(models) -> np.ndarray:
    """Argmax of the mean probability matrix (ties: first category)."""
    P, _ = _stack(models)
    return _argbest(P.mean(axis=0), None, lowest=False)


def majority_ensemble(models) -> np.ndarray:
    """Plurality of per-model argmax votes; vote ties go to the higher mean probability, then category order."""
    P, _ = _stack(models)
    n, m, k = P.shape
    votes = np.zeros((m, k))
    for p in P:
        votes[np.arange(m), _argbest(p, None, lowest=False)] += 1
    return _argbest(votes, P.mean(axis=0), lowest=False)


STRATEGIES = {
    "uncertainty": lambda models: uncertainty_ensemble(models).labels,
    "averaging": averaging_ensemble,
    "majority": majority_ensemble,
}
