"""Per-depth classifier stacks and teacher training."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .nn import (AdamState, DenseParams, Tensor, adam_step, cross_entropy, forward,
                 one_hot, predict_proba, softmax_T, value_and_grad)
from .propagation import Combinator, DepthFeatures, combine

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    wd: float = 0.0
    dropout: float = 0.3
    epochs: int = 500
    patience: int = 50
    hidden: tuple = ()


def fit(arrays, loss_fn, cfg: TrainConfig, seed, score_fn=None):
    """Adam on ``loss_fn(leaves, rng)``; keeps the arrays with the best ``score_fn``.

    Without ``score_fn`` the final arrays are returned. Early stopping after
    ``cfg.patience`` epochs without a strict improvement.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    state = AdamState.zeros_like(arrays)
    rng = np.random.default_rng(seed)
    best, best_score, stale = [a.copy() for a in arrays], -np.inf, 0
    for epoch in range(cfg.epochs):
        loss, grads = value_and_grad(lambda leaves: loss_fn(leaves, rng), arrays)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became {loss} at epoch {epoch}")
        arrays = adam_step(arrays, grads, state, cfg.lr, cfg.wd)
        if score_fn is None:
            continue
        score = score_fn(arrays)
        if score > best_score:
            best, best_score, stale = [a.copy() for a in arrays], score, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.debug("early stop at epoch %d (best %.4f)", epoch, best_score)
                break
    return best if score_fn is not None else arrays


@dataclass
class ClassifierStack:
    """Classifiers ``f^(1) .. f^(k)``; ``stack[l]`` is the depth-``l`` classifier."""

    mode: Combinator
    f: int
    c: int
    k: int
    classifiers: dict = field(default_factory=dict)

    def input_dim(self, l: int) -> int:
        return (l + 1) * self.f if Combinator(self.mode) is Combinator.SIGN else self.f

    def __getitem__(self, l: int) -> DenseParams:
        if l not in self.classifiers:
            raise KeyError(f"no classifier trained for depth {l}")
        return self.classifiers[l]

    def __contains__(self, l: int) -> bool:
        return l in self.classifiers

    def __setitem__(self, l: int, params: DenseParams) -> None:
        if not 1 <= l <= self.k:
            raise ValueError(f"depth {l} outside [1, {self.k}]")
        if params.in_dim != self.input_dim(l):
            raise ValueError(f"classifier for depth {l} takes width {params.in_dim}, "
                             f"expected {self.input_dim(l)}")
        if params.out_dim != self.c:
            raise ValueError(f"classifier emits {params.out_dim} classes, expected {self.c}")
        self.classifiers[l] = params

    def new_params(self, l: int, cfg: TrainConfig, rng) -> DenseParams:
        sizes = (self.input_dim(l), *cfg.hidden, self.c)
        return DenseParams.init(sizes, rng, dropout=cfg.dropout)

    def copy(self) -> ClassifierStack:
        return ClassifierStack(self.mode, self.f, self.c, self.k,
                               {l: p.copy() for l, p in self.classifiers.items()})

    def complete(self) -> bool:
        return all(l in self.classifiers for l in range(1, self.k + 1))

    # persistence ---------------------------------------------------------
    def save(self, path) -> None:
        depths = sorted(self.classifiers)
        meta = {"kind": "classifier_stack", "mode": Combinator(self.mode).value, "f": self.f,
                "c": self.c, "k": self.k,
                "layers": {str(l): {"sizes": list(self[l].sizes), "activation": self[l].activation,
                                    "dropout": self[l].dropout} for l in depths}}
        arrays = [a for l in depths for a in self[l].arrays()]
        checkpoint.save(path, meta, arrays)

    @classmethod
    def load(cls, path) -> ClassifierStack:
        meta, arrays = checkpoint.load(path)
        if meta.get("kind") != "classifier_stack":
            raise checkpoint.CheckpointError(f"not a classifier checkpoint: {meta.get('kind')}")
        stack = cls(Combinator(meta["mode"]), meta["f"], meta["c"], meta["k"])
        pos = 0
        for key in sorted(meta["layers"], key=int):
            info = meta["layers"][key]
            n_arr = 2 * (len(info["sizes"]) - 1)
            p = DenseParams(tuple(info["sizes"]), [], [], info["activation"], info["dropout"])
            p.set_arrays(arrays[pos:pos + n_arr])
            pos += n_arr
            stack[int(key)] = p
        return stack


def predict(params: DenseParams, features) -> np.ndarray:
    return predict_proba(params, features)


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    if preds.ndim == 2:
        preds = preds.argmax(axis=1)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(preds == labels))


def ce_loss(params: DenseParams, x, y_onehot, leaves, rng=None, train_mode=True) -> Tensor:
    logits = forward(params, x, train_mode=train_mode, rng=rng, leaves=leaves)
    return cross_entropy(softmax_T(logits, 1.0), y_onehot)


def train_teacher(df: DepthFeatures, labels, train_idx, val_idx, cfg: TrainConfig,
                  seed, c: int | None = None, depth: int | None = None) -> DenseParams:
    """Train ``f^(k)`` on ``combine(df, k)`` with cross-entropy and early stopping.

    ``depth`` trains a plain CE classifier for another depth instead.
    """
    train_idx, val_idx = np.asarray(train_idx), np.asarray(val_idx)
    if len(train_idx) == 0:
        raise ValueError("empty labeled set")
    if len(val_idx) == 0:
        raise ValueError("empty validation set")
    labels = np.asarray(labels)
    c = int(labels[train_idx].max() + 1) if c is None else c
    depth = df.k if depth is None else depth
    x = combine(df, depth)
    rng = np.random.default_rng(seed)
    sizes = (x.shape[1], *cfg.hidden, c)
    params = DenseParams.init(sizes, rng, dropout=cfg.dropout)
    y = one_hot(labels[train_idx], c)
    xt, xv, yv = x[train_idx], x[val_idx], labels[val_idx]

    def loss_fn(leaves, r):
        return ce_loss(params, xt, y, leaves, r)

    def score(arrays):
        p = params.copy()
        p.set_arrays(arrays)
        return accuracy(predict(p, xv), yv)

    best = fit(params.arrays(), loss_fn, cfg, rng, score)
    out = params.copy()
    out.set_arrays(best)
    return out
