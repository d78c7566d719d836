"""Mini-batch Adam training and batched inference."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..labels import category_index
from . import losses
from .layers import softmax
from .model import ATTR_CENTER, ATTR_SCALE, PRESETS, Model, ModelConfig, backward, build_model, forward

LOSSES = ("weighted_ce", "soft_ce", "ccc")
WEIGHT_MODES = ("balanced", "none")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-5
    lr_final: float | None = None  # linear per-epoch decay towards this value when set
    batch_size: int = 128
    seed: int = 0
    class_weights: str = "balanced"
    loss: str = "weighted_ce"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or (self.lr_final is not None and self.lr_final < 0):
            raise ValueError("learning rates must be non-negative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.class_weights not in WEIGHT_MODES:
            raise ValueError(f"class_weights must be one of {WEIGHT_MODES}")

    def lr_at(self, epoch: int) -> float:
        if self.lr_final is None or self.epochs == 1:
            return self.learning_rate
        frac = epoch / (self.epochs - 1)
        return self.learning_rate + (self.lr_final - self.learning_rate) * frac


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    metric: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "metric"])
            for i, (l, m) in enumerate(zip(self.loss, self.metric), start=1):
                w.writerow([i, format(l, ".17g"), format(m, ".17g")])


class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def prepare_targets(targets, task: str, loss: str) -> np.ndarray:
    """Stack raw targets into training form.

    Categorical targets may be integer labels, category letters or 8-vectors; ``weighted_ce``
    turns vectors into their argmax one-hot, ``soft_ce`` keeps them.
    Attribute targets are mapped to ``(y - 4) / 3``.
    """
    if task == "attributes":
        y = np.asarray(targets, dtype=np.float64).reshape(len(targets), 3)
        return (y - ATTR_CENTER) / ATTR_SCALE
    rows = []
    for t in targets:
        if np.ndim(t) == 0:
            q = np.zeros(8)
            q[category_index(t) if isinstance(t, str) else int(t)] = 1.0
        else:
            q = np.asarray(t, dtype=np.float64)
            if loss == "weighted_ce":
                q = np.eye(8)[int(np.argmax(q))]
        rows.append(q)
    return np.stack(rows)


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    out = [order[i : i + size] for i in range(0, len(order), size)]
    # a lone trailing sample would make the batch CCC undefined
    if len(out) > 1 and len(out[-1]) == 1:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


def _batch_loss_and_grads(model, bundles, Y, idx, config, weights):
    outs, caches = [], []
    for j in idx:
        o, c = forward(model, bundles[j])
        outs.append(o)
        caches.append(c)
    outs = np.stack(outs)
    B = len(idx)
    if config.loss == "ccc":
        loss = losses.ccc_loss(outs, Y[idx])
        douts = losses.ccc_loss_grad(outs, Y[idx])
    else:
        loss = float(np.mean([losses.weighted_ce(outs[r], Y[j], weights) for r, j in enumerate(idx)]))
        douts = np.stack([losses.weighted_ce_grad(outs[r], Y[j], weights) for r, j in enumerate(idx)]) / B
    grads = None
    for r in range(B):
        g = backward(model, douts[r], caches[r])
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    return loss, grads, outs


def evaluate_loss(model: Model, bundles, Y, config: TrainConfig, weights=None) -> tuple[float, float]:
    """Full-dataset loss and metric (accuracy in [0, 1] or mean CCC)."""
    outs = np.stack([forward(model, b)[0] for b in bundles])
    if config.loss == "ccc":
        loss = losses.ccc_loss(outs, Y) if len(bundles) >= 2 else float("nan")
        pred = np.clip(ATTR_CENTER + ATTR_SCALE * outs, 1.0, 7.0)
        gold = ATTR_CENTER + ATTR_SCALE * Y
        metric = (1.0 - losses.ccc_loss(pred, gold)) if len(bundles) >= 2 else float("nan")
        return loss, metric
    loss = float(np.mean([losses.weighted_ce(o, y, weights) for o, y in zip(outs, Y)]))
    metric = float(np.mean(outs.argmax(axis=1) == Y.argmax(axis=1)))
    return loss, metric


def train(
    bundles,
    targets,
    config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = PRESETS["desk"],
    model: Model | None = None,
) -> tuple[Model, History]:
    """Train a fresh (or copied, if ``model`` is given) network.

    ``history.loss[e]`` is the full-dataset loss after epoch ``e``.
    Raises ``TrainingError`` on a non-finite batch loss.
    """
    bundles = list(bundles)
    if not bundles:
        raise TrainingError("empty training set")
    if len(targets) != len(bundles):
        raise TrainingError(f"{len(bundles)} bundles but {len(targets)} targets")
    model = build_model(bundles, model_config, config.seed) if model is None else model.copy()
    task = model.config.task
    if (task == "attributes") != (config.loss == "ccc"):
        raise TrainingError(f"loss {config.loss!r} does not fit task {task!r}")
    if config.loss == "ccc" and len(bundles) < 2:
        raise TrainingError("ccc loss needs at least two samples")
    Y = prepare_targets(targets, task, config.loss)
    weights = None
    if task == "categorical" and config.class_weights == "balanced":
        weights = losses.class_weights(Y, 8)

    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.beta1, config.beta2, config.eps)
    history = History()
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(bundles))
        for b, idx in enumerate(_batches(order, config.batch_size)):
            loss, grads, _ = _batch_loss_and_grads(model, bundles, Y, idx, config, weights)
            if not np.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch + 1}, batch {b + 1} (lr={lr:g})")
            if lr > 0:
                opt.step(model.params, grads, lr)
        loss, metric = evaluate_loss(model, bundles, Y, config, weights)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite dataset loss after epoch {epoch + 1}")
        history.loss.append(loss)
        history.metric.append(metric)
    return model, history


def predict(model: Model, bundles) -> np.ndarray:
    """Class probabilities (m x 8) or attribute values clamped to [1, 7] (m x 3)."""
    outs = np.stack([forward(model, b)[0] for b in bundles]) if bundles else np.zeros((0, model.n_outputs))
    if model.config.task == "categorical":
        return softmax(outs, axis=1)
    return np.clip(ATTR_CENTER + ATTR_SCALE * outs, 1.0, 7.0)
