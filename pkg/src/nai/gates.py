"""Learned per-depth exit gates.

Gate ``g^(l)`` sees ``[X^(l)_i || Xhat^(l)_i]`` where ``Xhat`` starts at the
stationary feature and is overwritten by ``X^(l)`` once a gate selects the
node. A penalty on the first mask column keeps every node from being selected
twice. Training routes each labeled node to the classifier of the depth that
selected it and minimizes cross-entropy of the routed prediction; the
classifiers stay frozen.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .classifiers import ClassifierStack, TrainConfig, accuracy, fit, predict
from .nn import Tensor, _sigmoid, _softmax, as_tensor, concat, cross_entropy, gumbel_softmax, one_hot, sample_gumbel
from .propagation import DepthFeatures, StationaryState, combine

log = logging.getLogger(__name__)

PENALTY_MU = 1000.0
PENALTY_PHI = 1000.0


@dataclass
class GateStack:
    """Gates ``g^(1) .. g^(k-1)``; ``weights[l]`` is a ``(2f, 2)`` matrix, no bias."""

    f: int
    k: int
    weights: dict = field(default_factory=dict)
    mu: float = PENALTY_MU
    phi: float = PENALTY_PHI
    tau: float = 1.0

    @classmethod
    def init(cls, f: int, k: int, rng, **kw) -> GateStack:
        rng = np.random.default_rng(rng)
        bound = np.sqrt(6.0 / (2 * f + 2))
        weights = {l: rng.uniform(-bound, bound, size=(2 * f, 2)) for l in range(1, k)}
        return cls(f=f, k=k, weights=weights, **kw)

    def depths(self) -> list:
        return sorted(self.weights)

    def copy(self) -> GateStack:
        return GateStack(self.f, self.k, {l: w.copy() for l, w in self.weights.items()},
                         self.mu, self.phi, self.tau)

    def save(self, path) -> None:
        meta = {"kind": "gate_stack", "f": self.f, "k": self.k, "mu": self.mu,
                "phi": self.phi, "tau": self.tau, "depths": self.depths()}
        checkpoint.save(path, meta, [self.weights[l] for l in self.depths()])

    @classmethod
    def load(cls, path) -> GateStack:
        meta, arrays = checkpoint.load(path)
        if meta.get("kind") != "gate_stack":
            raise checkpoint.CheckpointError(f"not a gate checkpoint: {meta.get('kind')}")
        return cls(meta["f"], meta["k"], dict(zip(meta["depths"], arrays)),
                   meta["mu"], meta["phi"], meta["tau"])


def penalty(first_columns, mu: float = PENALTY_MU, phi: float = PENALTY_PHI):
    """``sum_j mu * sigmoid(phi * (m_j - 0.5))`` over earlier first-column mask values."""
    theta = None
    for m1 in first_columns:
        if isinstance(m1, Tensor):
            term = ((m1 - 0.5) * phi).sigmoid() * mu
        else:
            term = mu * _sigmoid(phi * (np.asarray(m1, dtype=np.float64) - 0.5))
        theta = term if theta is None else theta + term
    return theta


def gate_forward(weight, x_l, x_hat, theta=None, train: bool = False, rng=None,
                 hard: bool = True, tau: float = 1.0, noise=None):
    """Mask and preference ``e`` for one gate.

    Inference (``train=False``) is noise-free argmax of ``e - [theta, 0]`` with
    ties going to the first column and works on numpy. Training returns
    tensors; ``hard`` selects straight-through versus the soft relaxation.
    """
    if train:
        inp = concat([as_tensor(x_l), as_tensor(x_hat)], axis=-1)
        e = (inp @ as_tensor(weight)).softmax()
        logits = e if theta is None else e - concat([as_tensor(theta), Tensor(np.zeros(theta.shape))], axis=-1)
        return gumbel_softmax(logits, tau, rng=rng, hard=hard, noise=noise), e
    x_l, x_hat = np.atleast_2d(x_l), np.atleast_2d(x_hat)
    if x_l.shape != x_hat.shape or x_l.shape[1] * 2 != np.shape(weight)[0]:
        raise ValueError("gate input shapes do not match the gate weight")
    e = _softmax(np.concatenate([x_l, x_hat], axis=1) @ weight)
    logits = e.copy()
    if theta is not None:
        logits[:, 0] -= np.asarray(theta, dtype=np.float64).reshape(-1)
    mask = np.zeros_like(e)
    mask[np.arange(len(e)), np.argmax(logits, axis=1)] = 1.0
    return mask, e


def carry_update(mask, x_l, x_hat):
    """Next gate input: ``X^(l)`` where the mask picks column 0, else the old carry."""
    if isinstance(mask, Tensor):
        return mask[:, 0:1] * as_tensor(x_l) + mask[:, 1:2] * as_tensor(x_hat)
    mask = np.atleast_2d(mask)
    if not (np.all((mask == 0) | (mask == 1)) and np.all(mask.sum(axis=1) == 1)):
        raise ValueError("carry update needs one-hot masks")
    pick = mask[:, :1].astype(bool)
    return np.where(pick, np.atleast_2d(x_l), np.atleast_2d(x_hat))


def gate_exit_depth(masks, k: int) -> int:
    """Smallest depth whose mask is ``(1, 0)``; ``masks[0]`` belongs to depth 1."""
    for l, m in enumerate(masks, start=1):
        if np.asarray(m)[0] == 1:
            return l
    return k


# ----------------------------------------------------------------- training

def gate_routing(gates: GateStack, gate_leaves: dict, xs: dict, x_inf, probs: dict,
                 t_min: int = 1, t_max: int | None = None, rng=None, hard=True, noises=None):
    """Routed class distribution of the gated stack on a set of nodes.

    ``xs[l]`` are raw propagated rows, ``probs[l]`` the frozen classifier
    outputs at depth ``l``. Returns ``(prediction, first_columns)``.
    """
    t_max = gates.k if t_max is None else t_max
    x_hat = as_tensor(x_inf)
    remaining = Tensor(np.ones((x_hat.shape[0], 1)))
    pred = None
    history = []
    for l in range(t_min, t_max):
        theta = penalty(history, gates.mu, gates.phi)
        if theta is None:
            theta = Tensor(np.zeros((x_hat.shape[0], 1)))
        noise = None if noises is None else noises[l]
        mask, _ = gate_forward(gate_leaves[l], xs[l], x_hat, theta, train=True, rng=rng,
                               hard=hard, tau=gates.tau, noise=noise)
        chosen = remaining * mask[:, 0:1]
        term = chosen * as_tensor(probs[l])
        pred = term if pred is None else pred + term
        remaining = remaining * mask[:, 1:2]
        x_hat = carry_update(mask, xs[l], x_hat)
        history.append(mask[:, 0:1])
    term = remaining * as_tensor(probs[t_max])
    pred = term if pred is None else pred + term
    return pred, history


def gate_loss(gates: GateStack, gate_leaves: dict, xs: dict, x_inf, probs: dict, y_onehot,
              t_min=1, t_max=None, rng=None, hard=True, noises=None) -> Tensor:
    pred, _ = gate_routing(gates, gate_leaves, xs, x_inf, probs, t_min, t_max, rng, hard, noises)
    return cross_entropy(pred, y_onehot)


def route_inference(gates: GateStack, xs: dict, x_inf, t_min: int, t_max: int) -> np.ndarray:
    """Exit depth of every row under deterministic gating."""
    n = np.asarray(x_inf).shape[0]
    depth = np.full(n, t_max)
    active = np.ones(n, dtype=bool)
    for l in range(t_min, t_max):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        mask, _ = gate_forward(gates.weights[l], xs[l][idx], np.asarray(x_inf)[idx])
        sel = idx[mask[:, 0] == 1]
        depth[sel] = l
        active[sel] = False
    return depth


@dataclass
class GateTrainConfig(TrainConfig):
    t_min: int = 1
    t_max: int | None = None
    hard: bool = True
    samples: int = 1
    restarts: int = 1


def routed_accuracy(gates: GateStack, stack: ClassifierStack, df: DepthFeatures, st: StationaryState,
                    labels, nodes, t_min: int = 1, t_max: int | None = None) -> float:
    """Accuracy on ``nodes`` when each one is classified at its gate exit depth."""
    t_max = stack.k if t_max is None else t_max
    nodes = np.asarray(nodes)
    exit_at = route_inference(gates, {l: df.stack[l][nodes] for l in range(t_min, t_max)},
                              st.rows(nodes), t_min, t_max)
    pred = np.empty(len(nodes), dtype=np.int64)
    for d in np.unique(exit_at):
        sel = exit_at == d
        pred[sel] = predict(stack[d], combine(df, d)[nodes[sel]]).argmax(axis=1)
    return accuracy(pred, np.asarray(labels)[nodes])


def train_gates(gates: GateStack, stack: ClassifierStack, df: DepthFeatures, st: StationaryState,
                labels, labeled, val, cfg: GateTrainConfig, seed) -> GateStack:
    """Optimize all gates jointly on labeled nodes; classifiers are read-only."""
    k = stack.k
    if k == 1 or not gates.weights:
        return gates.copy()
    if not stack.complete():
        raise ValueError("all classifiers must be trained before gate training")
    t_max = k if cfg.t_max is None else cfg.t_max
    labels = np.asarray(labels)
    probs_all = {l: predict(stack[l], combine(df, l)) for l in range(cfg.t_min, t_max + 1)}
    x_inf = st.dense()
    y = one_hot(labels[labeled], stack.c)
    xs = {l: df.stack[l][labeled] for l in range(1, k)}
    probs = {l: p[labeled] for l, p in probs_all.items()}
    xinf_l = x_inf[labeled]
    xs_val = {l: df.stack[l][val] for l in range(1, k)}
    depths = gates.depths()

    def loss_fn(leaves, rng):
        # mean over independent Gumbel draws lowers the variance of the estimator
        total = None
        for _ in range(cfg.samples):
            term = gate_loss(gates, dict(zip(depths, leaves)), xs, xinf_l, probs, y,
                             cfg.t_min, t_max, rng, cfg.hard)
            total = term if total is None else total + term
        return total * (1.0 / cfg.samples)

    def score(arrays):
        trial = GateStack(gates.f, gates.k, dict(zip(depths, arrays)), gates.mu, gates.phi, gates.tau)
        exit_at = route_inference(trial, xs_val, x_inf[val], cfg.t_min, t_max)
        pred = np.array([probs_all[d][v].argmax() for d, v in zip(exit_at, val)])
        return accuracy(pred, labels[val])

    best = fit([gates.weights[l] for l in depths], loss_fn, cfg, seed, score)
    out = gates.copy()
    out.weights = dict(zip(depths, best))
    return out
