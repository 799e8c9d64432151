"""Two-stage distillation of the per-depth classifiers.

Single-scale: every student ``f^(l)``, ``l < k``, learns from hard labels and
from the temperature-softened outputs of the frozen ``f^(k)``.
Multi-scale: the top ``r`` classifiers vote through per-depth attention vectors
into an ensemble teacher that is optimized jointly with the students.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierStack, TrainConfig, accuracy, fit, predict
from .nn import (DenseParams, Tensor, as_tensor, concat, cross_entropy, forward, one_hot,
                 softmax_T, stack_weighted)
from .propagation import DepthFeatures, combine


@dataclass
class DistillConfig:
    t_single: float = 1.2
    lam_single: float = 0.6
    t_multi: float = 1.9
    lam_multi: float = 0.8
    r: int | None = None
    teacher_weight: float = 1.0
    joint: bool = True
    detach_ensemble: bool = False
    single: TrainConfig = field(default_factory=TrainConfig)
    multi: TrainConfig = field(default_factory=TrainConfig)

    def ensemble_size(self, k: int) -> int:
        r = min(3, k - 1) if self.r is None else self.r
        if not 1 <= r <= k:
            raise ValueError(f"ensemble size r={r} must lie in [1, k={k}]")
        return r

    def validate(self) -> None:
        for name in ("t_single", "t_multi"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lam_single", "lam_multi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class Splits:
    """Positions (rows of the depth features) of the node sets used in training."""

    labeled: np.ndarray
    train: np.ndarray
    val: np.ndarray


# ----------------------------------------------------------------- losses

def single_scale_loss(student: DenseParams, leaves, x, teacher_soft, y_labeled, splits: Splits,
                      T: float, lam: float, rng=None, train_mode=True) -> Tensor:
    """``(1 - lam) * CE_labeled + lam * T^2 * CE(student_T, teacher_T)`` on the train set."""
    z = forward(student, x, train_mode=train_mode, rng=rng, leaves=leaves)
    loss_c = cross_entropy(softmax_T(z[splits.labeled], 1.0), y_labeled)
    loss_d = cross_entropy(softmax_T(z[splits.train], T), teacher_soft)
    return (1.0 - lam) * loss_c + (lam * T * T) * loss_d


def ensemble_tensors(probs: list, s_vectors: list):
    """Ensemble teacher from member probabilities (each ``(N, c)``).

    Returns ``(zbar, w, q)``.
    """
    q = concat([(as_tensor(p) @ _col(s)).sigmoid() for p, s in zip(probs, s_vectors)], axis=1)
    w = q.softmax(axis=1)
    zbar = stack_weighted(w, [as_tensor(p) for p in probs]).softmax()
    return zbar, w, q


def _col(s) -> Tensor:
    s = as_tensor(s)
    return s if s.data.ndim == 2 else _reshape_col(s)


def _reshape_col(s: Tensor) -> Tensor:
    out = Tensor(s.data.reshape(-1, 1), (s,))
    if out.requires_grad:
        out._backward = lambda g: s._accum(g.reshape(s.shape))
    return out


def multi_scale_loss(stack: ClassifierStack, student_leaves: dict, s_leaves: list, feats: dict,
                     y_labeled, splits: Splits, cfg: DistillConfig, rng=None,
                     train_mode=True, students=None):
    """Joint objective over students plus the ensemble constraint (weighted once).

    ``student_leaves[l]`` are trainable tensors for ``f^(l)``; depths absent
    from it are evaluated with their stored (frozen) weights.
    """
    k = stack.k
    r = cfg.ensemble_size(k)
    members = list(range(k - r + 1, k + 1))
    students = list(range(1, k)) if students is None else students
    T, lam = cfg.t_multi, cfg.lam_multi
    logits = {}
    for l in set(members) | set(students):
        leaves = student_leaves.get(l)
        tm = train_mode and leaves is not None
        logits[l] = forward(stack[l], feats[l], train_mode=tm, rng=rng, leaves=leaves)
    probs = [softmax_T(logits[l], 1.0) for l in members]
    zbar, _, _ = ensemble_tensors(probs, s_leaves)
    loss_t = cross_entropy(zbar[splits.labeled], y_labeled)
    pbar = softmax_T(zbar[splits.train], T)
    if cfg.detach_ensemble:
        pbar = pbar.detach()
    total = cfg.teacher_weight * loss_t
    for l in students:
        loss_c = cross_entropy(softmax_T(logits[l][splits.labeled], 1.0), y_labeled)
        loss_e = cross_entropy(softmax_T(logits[l][splits.train], T), pbar)
        total = total + (1.0 - lam) * loss_c + (lam * T * T) * loss_e
    return total


# ----------------------------------------------------------------- stages

def _features(df: DepthFeatures, k: int) -> dict:
    return {l: combine(df, l) for l in range(1, k + 1)}


def _check_teacher(stack: ClassifierStack) -> None:
    if stack.k not in stack:
        raise ValueError("teacher f^(k) must be trained before distillation")


def single_scale_distill(stack: ClassifierStack, df: DepthFeatures, labels, splits: Splits,
                         cfg: DistillConfig, seed, lam: float | None = None,
                         T: float | None = None) -> ClassifierStack:
    """Train fresh students ``f^(1..k-1)`` against the frozen teacher.

    ``lam=0`` gives plain cross-entropy training of every student.
    """
    _check_teacher(stack)
    cfg.validate()
    lam = cfg.lam_single if lam is None else lam
    T = cfg.t_single if T is None else T
    out = stack.copy()
    k = stack.k
    labels = np.asarray(labels)
    y = one_hot(labels[splits.labeled], stack.c)
    yv = labels[splits.val]
    teacher_x = combine(df, k)
    z_k = forward(stack[k], teacher_x).data
    teacher_soft = softmax_T(z_k[splits.train], T)
    rng = np.random.default_rng(seed)
    for l in range(1, k):
        x = combine(df, l)
        student = stack.new_params(l, cfg.single, rng)

        def loss_fn(leaves, r, student=student, x=x):
            return single_scale_loss(student, leaves, x, teacher_soft, y, splits, T, lam, r)

        def score(arrays, student=student, x=x):
            p = student.copy()
            p.set_arrays(arrays)
            return accuracy(predict(p, x[splits.val]), yv)

        best = fit(student.arrays(), loss_fn, cfg.single, rng, score)
        trained = student.copy()
        trained.set_arrays(best)
        out[l] = trained
    return out


def ensemble_forward(stack: ClassifierStack, df: DepthFeatures, r: int, s_vectors, nodes=None):
    """Ensemble teacher outputs on ``nodes`` as numpy arrays: ``(zbar, w, q)``."""
    k = stack.k
    if not 1 <= r <= k:
        raise ValueError(f"ensemble size r={r} must lie in [1, k={k}]")
    members = range(k - r + 1, k + 1)
    probs = []
    for l in members:
        x = combine(df, l)
        if nodes is not None:
            x = x[nodes]
        probs.append(predict(stack[l], x))
    zbar, w, q = ensemble_tensors(probs, [np.asarray(s, dtype=np.float64) for s in s_vectors])
    return zbar.data, w.data, q.data


def multi_scale_distill(stack: ClassifierStack, df: DepthFeatures, labels, splits: Splits,
                        cfg: DistillConfig, seed, s_init=None):
    """Jointly refine students ``f^(1..k-1)`` and attention vectors; ``f^(k)`` stays frozen.

    Students absent from ``stack`` start from a fresh initialization.
    Returns ``(stack, s_vectors)``.
    """
    _check_teacher(stack)
    cfg.validate()
    k = stack.k
    if k == 1:
        return stack.copy(), []
    r = cfg.ensemble_size(k)
    out = stack.copy()
    rng = np.random.default_rng(seed)
    for l in range(1, k):
        if l not in out:
            out[l] = out.new_params(l, cfg.multi, rng)
    labels = np.asarray(labels)
    y = one_hot(labels[splits.labeled], stack.c)
    yv = labels[splits.val]
    feats = _features(df, k)
    s_vectors = [np.zeros(stack.c) for _ in range(r)] if s_init is None else [np.array(s) for s in s_init]

    groups = [list(range(1, k))] if cfg.joint else [[l] for l in range(1, k)]
    for students in groups:
        sizes = [len(out[l].arrays()) for l in students]

        def unpack(leaves, students=students, sizes=sizes):
            student_leaves, pos = {}, 0
            for l, n_arr in zip(students, sizes):
                student_leaves[l] = leaves[pos:pos + n_arr]
                pos += n_arr
            return student_leaves, leaves[pos:]

        def loss_fn(leaves, rr, students=students, unpack=unpack):
            student_leaves, s_leaves = unpack(leaves)
            return multi_scale_loss(out, student_leaves, s_leaves, feats, y, splits, cfg, rr,
                                    students=students)

        def apply(arrays, students=students, sizes=sizes):
            trial, pos = out.copy(), 0
            for l, n_arr in zip(students, sizes):
                p = trial[l].copy()
                p.set_arrays(arrays[pos:pos + n_arr])
                trial[l] = p
                pos += n_arr
            return trial, [a.copy() for a in arrays[pos:]]

        def score(arrays, apply=apply, students=students):
            trial, _ = apply(arrays)
            return float(np.mean([accuracy(predict(trial[l], feats[l][splits.val]), yv)
                                  for l in students]))

        arrays = [a for l in students for a in out[l].arrays()] + s_vectors
        best = fit(arrays, loss_fn, cfg.multi, rng, score)
        out, s_vectors = apply(best)
    return out, s_vectors


def inception_distill(stack: ClassifierStack, df: DepthFeatures, labels, splits: Splits,
                      cfg: DistillConfig, seed, single: bool = True, multi: bool = True):
    """Run the enabled stages. With both disabled, students get plain CE training.

    Returns ``(stack, s_vectors)``; ``s_vectors`` is empty without the multi stage.
    """
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=2)
    out = stack
    if single:
        out = single_scale_distill(out, df, labels, splits, cfg, seeds[0])
    elif not multi:
        out = single_scale_distill(out, df, labels, splits, cfg, seeds[0], lam=0.0)
    s_vectors = []
    if multi:
        out, s_vectors = multi_scale_distill(out, df, labels, splits, cfg, seeds[1])
    return out, s_vectors
