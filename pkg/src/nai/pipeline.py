"""End-to-end training and evaluation on a dataset bundle."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .classifiers import ClassifierStack, TrainConfig, accuracy, predict, train_teacher
from .data import DatasetBundle, inductive_train_view, positions
from .distillation import DistillConfig, Splits, inception_distill
from .gates import GateStack, GateTrainConfig, routed_accuracy, train_gates
from .graph import normalize
from .inference import DEFAULT_BATCH, InferencePolicy, ModelBundle, infer
from .metrics import MetricRow, report
from .propagation import Combinator, combine, precompute_depths, stationary

log = logging.getLogger(__name__)

STAGES = ("teacher", "distill", "gates", "eval")


@dataclass
class PipelineConfig:
    mode: str = "sgc"
    k: int = 7
    gamma: float = 0.5
    s2gc_divisor: str = "literal"
    teacher: TrainConfig = field(default_factory=TrainConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    gates: GateTrainConfig = field(default_factory=GateTrainConfig)
    batch_size: int = DEFAULT_BATCH
    seed: int = 0

    def validate(self) -> None:
        Combinator(self.mode)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.distill.validate()

    def stage_seeds(self) -> dict:
        kids = np.random.SeedSequence(self.seed).spawn(len(STAGES))
        return {s: int(kid.generate_state(1, np.uint64)[0]) for s, kid in zip(STAGES, kids)}


@dataclass
class TrainView:
    """Everything computed once on the inductive training graph."""

    graph: object
    x: np.ndarray
    nodes: np.ndarray
    labels: np.ndarray
    splits: Splits
    adj: object
    df: object
    st: object


def train_view(data: DatasetBundle, cfg: PipelineConfig) -> TrainView:
    g, x, nodes = inductive_train_view(data)
    adj = normalize(g, cfg.gamma)
    df = precompute_depths(adj, x, cfg.k, cfg.mode)
    splits = Splits(labeled=positions(nodes, data.labeled), train=np.arange(len(nodes)),
                    val=positions(nodes, data.unlabeled))
    return TrainView(g, x, nodes, data.labels[nodes], splits, adj, df, stationary(g, x, cfg.gamma))


def fit_teacher(view: TrainView, cfg: PipelineConfig, c: int, seed) -> ClassifierStack:
    stack = ClassifierStack(Combinator(cfg.mode), view.x.shape[1], c, cfg.k)
    stack[cfg.k] = train_teacher(view.df, view.labels, view.splits.labeled, view.splits.val,
                                 cfg.teacher, seed, c=c)
    return stack


def fit_students(view: TrainView, stack: ClassifierStack, cfg: PipelineConfig, seed,
                 single=True, multi=True):
    return inception_distill(stack, view.df, view.labels, view.splits, cfg.distill, seed,
                             single=single, multi=multi)


def fit_gates(view: TrainView, stack: ClassifierStack, cfg: PipelineConfig, seed) -> GateStack:
    """Train ``cfg.gates.restarts`` gate stacks from fresh inits; keep the best on V_u."""
    best, best_acc = None, -np.inf
    for child in np.random.SeedSequence(seed).spawn(max(cfg.gates.restarts, 1)):
        init_seed, train_seed = child.generate_state(2, np.uint64)
        gates = GateStack.init(view.x.shape[1], cfg.k, np.random.default_rng(init_seed))
        gates = train_gates(gates, stack, view.df, view.st, view.labels, view.splits.labeled,
                            view.splits.val, cfg.gates, int(train_seed))
        acc = routed_accuracy(gates, stack, view.df, view.st, view.labels, view.splits.val,
                              cfg.gates.t_min, cfg.gates.t_max)
        log.info("gate restart val acc %.4f", acc)
        if acc > best_acc:
            best, best_acc = gates, acc
    return best


def train_all(data: DatasetBundle, cfg: PipelineConfig, single=True, multi=True, gates=True):
    """Teacher, distilled students and (optionally) gates. Returns ``(bundle, view)``."""
    cfg.validate()
    seeds = cfg.stage_seeds()
    view = train_view(data, cfg)
    stack = fit_teacher(view, cfg, data.n_classes, seeds["teacher"])
    log.info("teacher val acc %.4f", stack_accuracy(view, stack, cfg.k))
    stack, _ = fit_students(view, stack, cfg, seeds["distill"], single, multi)
    g = fit_gates(view, stack, cfg, seeds["gates"]) if gates and cfg.k > 1 else None
    return ModelBundle(stack, cfg.gamma, g, cfg.s2gc_divisor), view


def stack_accuracy(view: TrainView, stack: ClassifierStack, l: int, nodes=None) -> float:
    nodes = view.splits.val if nodes is None else nodes
    return accuracy(predict(stack[l], combine(view.df, l)[nodes]), view.labels[nodes])


# ----------------------------------------------------------------- evaluation

def evaluate(model: ModelBundle, data: DatasetBundle, policy: InferencePolicy, nodes=None,
             batch_size=DEFAULT_BATCH, ledger_mode="factorized", shrink_cone=False):
    """Inductive inference on the full graph (default: the test nodes)."""
    nodes = data.test if nodes is None else nodes
    return infer(model, data.graph, data.features, nodes, policy, batch_size=batch_size,
                 ledger_mode=ledger_mode, shrink_cone=shrink_cone)


def evaluate_row(method: str, model, data, policy, **kw) -> tuple[MetricRow, object]:
    rep = evaluate(model, data, policy, **kw)
    return report(method, rep.ledger, rep.accuracy(data.labels), len(rep.nodes)), rep


def validation_sweep(model: ModelBundle, data: DatasetBundle, thresholds, t_min=1, t_maxes=None,
                     batch_size=DEFAULT_BATCH, shrink_cone=False):
    """``(t_max, t_s, val_acc, fp_macs_per_node)`` for every distance policy tried.

    V_u is evaluated on the inference-time graph; no test labels are read.
    """
    k = model.k
    t_maxes = range(t_min, k + 1) if t_maxes is None else t_maxes
    adj = normalize(data.graph, model.gamma)
    out = []
    for t_max in t_maxes:
        for t_s in thresholds:
            pol = InferencePolicy("distance", t_min, t_max, float(t_s))
            rep = infer(model, data.graph, data.features, data.unlabeled, pol, batch_size=batch_size,
                        adj=adj, shrink_cone=shrink_cone)
            out.append((t_max, float(t_s), rep.accuracy(data.labels),
                        rep.ledger.fp_total / len(data.unlabeled)))
            if t_max == t_min:
                break
    return out


def tune_distance_policy(model: ModelBundle, data: DatasetBundle, thresholds, max_drop: float = 0.005,
                         t_min: int = 1, batch_size=DEFAULT_BATCH, shrink_cone=False):
    """Cheapest distance policy whose validation accuracy stays within ``max_drop``
    of fixed depth ``k``. Returns ``(policy, sweep)``."""
    sweep = validation_sweep(model, data, thresholds, t_min, batch_size=batch_size,
                             shrink_cone=shrink_cone)
    base = max(r[2] for r in sweep if r[0] == model.k and r[1] == 0.0)
    ok = [r for r in sweep if r[2] >= base - max_drop - 1e-12]
    t_max, t_s, _, _ = min(ok, key=lambda r: (r[3], -r[2]))
    return InferencePolicy("distance", min(t_min, t_max), t_max, t_s), sweep


def gate_policy(model: ModelBundle, t_min=1, t_max=None) -> InferencePolicy:
    return InferencePolicy("gate", t_min, model.k if t_max is None else t_max)


def tune_gate_policy(model: ModelBundle, data: DatasetBundle, max_drop: float = 0.005,
                     t_min: int = 1, base: float | None = None, batch_size=DEFAULT_BATCH):
    """Cheapest gate ``t_max`` whose V_u accuracy is within ``max_drop`` of ``base``
    (default: fixed depth ``k``). Returns ``(policy, [(t_max, acc, fp_macs)])``."""
    adj = normalize(data.graph, model.gamma)
    if base is None:
        base = infer(model, data.graph, data.features, data.unlabeled, InferencePolicy.fixed(model.k),
                     batch_size=batch_size, adj=adj).accuracy(data.labels)
    sweep = []
    for t_max in range(t_min, model.k + 1):
        rep = infer(model, data.graph, data.features, data.unlabeled, gate_policy(model, t_min, t_max),
                    batch_size=batch_size, adj=adj)
        sweep.append((t_max, rep.accuracy(data.labels), rep.ledger.fp_total / len(data.unlabeled)))
    ok = [r for r in sweep if r[1] >= base - max_drop - 1e-12] or [sweep[-1]]
    return gate_policy(model, t_min, min(ok, key=lambda r: (r[2], -r[1]))[0]), sweep


def with_gates(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return replace(cfg, gates=replace(cfg.gates, **kw))
