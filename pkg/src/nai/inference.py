"""Batched inductive inference with per-node early exit."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import ClassifierStack, predict
from .gates import GateStack, gate_forward
from .graph import Graph, NormalizedAdjacency, k_hop_frontier, normalize
from .metrics import (MacLedger, count_dense, count_distance, count_gate, count_spmm,
                      count_stationary)
from .propagation import Combinator, combine_rows, distance, precompute_depths, stationary, combine

DEFAULT_BATCH = 500


@dataclass(frozen=True)
class InferencePolicy:
    mode: str = "distance"
    t_min: int = 1
    t_max: int = 1
    t_s: float = 0.0

    def validate(self, k: int) -> None:
        if self.mode not in ("distance", "gate"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 1 <= self.t_min <= self.t_max <= k:
            raise ValueError(f"need 1 <= t_min={self.t_min} <= t_max={self.t_max} <= k={k}")
        if self.mode == "distance" and not self.t_s >= 0:
            raise ValueError("t_s must be nonnegative")

    @classmethod
    def fixed(cls, depth: int) -> InferencePolicy:
        return cls("distance", depth, depth, 0.0)


@dataclass
class ModelBundle:
    stack: ClassifierStack
    gamma: float = 0.5
    gates: GateStack | None = None
    s2gc_divisor: str = "literal"

    @property
    def k(self) -> int:
        return self.stack.k

    @property
    def mode(self) -> Combinator:
        return Combinator(self.stack.mode)


@dataclass
class PredictionReport:
    nodes: np.ndarray
    predicted: np.ndarray
    exit_depth: np.ndarray
    max_prob: np.ndarray
    k: int
    ledger: MacLedger = field(default_factory=MacLedger)

    def histogram(self) -> np.ndarray:
        return node_distribution(self)

    def accuracy(self, labels) -> float:
        return float(np.mean(self.predicted == np.asarray(labels)[self.nodes]))

    def merge(self, other: PredictionReport) -> PredictionReport:
        return PredictionReport(np.concatenate([self.nodes, other.nodes]),
                                np.concatenate([self.predicted, other.predicted]),
                                np.concatenate([self.exit_depth, other.exit_depth]),
                                np.concatenate([self.max_prob, other.max_prob]),
                                self.k, self.ledger.merge(other.ledger))

    def write(self, path, delimiter: str = ",") -> None:
        lines = [delimiter.join(("node_id", "exit_depth", "predicted_class", "max_prob"))]
        for row in zip(self.nodes, self.exit_depth, self.predicted, self.max_prob):
            lines.append(delimiter.join((str(row[0]), str(row[1]), str(row[2]), repr(float(row[3])))))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def read(path, delimiter: str = ","):
        rows = [l.split(delimiter) for l in Path(path).read_text().splitlines()[1:] if l]
        return {int(r[0]): (int(r[1]), int(r[2]), float(r[3])) for r in rows}


def node_distribution(report: PredictionReport) -> np.ndarray:
    """Exit counts per depth ``1..k`` (index 0 is depth 1)."""
    return np.bincount(report.exit_depth - 1, minlength=report.k)[:report.k]


def _within(g: Graph, nodes: np.ndarray, hops: int) -> np.ndarray:
    if hops == 0 or len(nodes) == 0:
        return np.unique(nodes)
    return k_hop_frontier(g, nodes, hops).layers[-1]


def infer_batch(bundle: ModelBundle, g: Graph, x, batch, policy: InferencePolicy,
                adj: NormalizedAdjacency | None = None, ledger_mode: str = "factorized",
                shrink_cone: bool = False) -> PredictionReport:
    """Early-exit inference for one batch over the full inference-time graph.

    At depth ``l`` only rows within ``t_max - l`` hops of the batch are
    propagated (the cone sampled once at ``t_max``). With ``shrink_cone`` the
    cone is re-sampled around the still active batch nodes before every depth.
    """
    k = bundle.k
    policy.validate(k)
    if policy.mode == "gate" and bundle.gates is None:
        raise ValueError("gate policy needs trained gates")
    batch = np.asarray(batch, dtype=np.int64)
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.min() < 0 or batch.max() >= g.n:
        raise ValueError("batch node outside graph")
    if len(np.unique(batch)) != len(batch):
        raise ValueError("batch contains duplicate nodes")
    x = np.asarray(x, dtype=np.float64)
    if adj is None:
        adj = normalize(g, bundle.gamma)
    n, f = x.shape
    nb = len(batch)
    mode = bundle.mode
    ledger = MacLedger(ledger_mode)
    t_min, t_max = policy.t_min, policy.t_max

    with ledger.timed("stationary"):
        st = stationary(g, x, bundle.gamma)
        x_inf = st.rows(batch)
    ledger.add("stationary", count_stationary(n, f, nb, ledger_mode))

    with ledger.timed("sampling"):
        cone = k_hop_frontier(g, batch, t_max)

    predicted = np.full(nb, -1, dtype=np.int64)
    exit_depth = np.zeros(nb, dtype=np.int64)
    max_prob = np.zeros(nb)
    active = np.ones(nb, dtype=bool)
    hist = [x[batch]]
    running = x[batch].copy() if mode is Combinator.S2GC else None
    prev = x

    def classify(pos, l):
        parts = [h[pos] for h in hist]
        feats = combine_rows(parts, mode, bundle.s2gc_divisor)
        probs = predict(bundle.stack[l], feats)
        ledger.add("classification", bundle.stack[l].n_macs(len(pos)))
        predicted[pos] = probs.argmax(axis=1)
        max_prob[pos] = probs.max(axis=1)
        exit_depth[pos] = l
        active[pos] = False

    for l in range(1, t_max + 1):
        if shrink_cone:
            with ledger.timed("sampling"):
                rows = _within(g, batch[active], t_max - l)
        else:
            rows = cone.layers[t_max - l]
        with ledger.timed("propagation"):
            cur = np.zeros_like(prev)
            sub = adj.matrix[rows]
            cur[rows] = sub @ prev
            ledger.add("propagation", count_spmm(sub.nnz, f))
            xb = cur[batch]
            hist.append(xb)
            if running is not None:
                running[active] += xb[active]
                ledger.add("propagation", int(active.sum()) * f)
        prev = cur
        if l < t_min:
            continue
        pos = np.flatnonzero(active)
        if l < t_max:
            with ledger.timed("distance_or_gate"):
                if policy.mode == "distance":
                    exits = distance(xb[pos], x_inf[pos]) < policy.t_s
                    ledger.add("distance_or_gate", count_distance(len(pos), f))
                else:
                    mask, _ = gate_forward(bundle.gates.weights[l], xb[pos], x_inf[pos])
                    exits = mask[:, 0] == 1
                    ledger.add("distance_or_gate", count_gate(len(pos), f))
            leaving = pos[exits]
            if len(leaving):
                with ledger.timed("classification"):
                    classify(leaving, l)
        else:
            with ledger.timed("classification"):
                classify(pos, l)
    return PredictionReport(batch, predicted, exit_depth, max_prob, k, ledger)


def infer(bundle: ModelBundle, g: Graph, x, nodes, policy: InferencePolicy,
          batch_size: int = DEFAULT_BATCH, **kw) -> PredictionReport:
    """Run :func:`infer_batch` over ``nodes`` in consecutive batches."""
    nodes = np.asarray(nodes, dtype=np.int64)
    adj = kw.pop("adj", None) or normalize(g, bundle.gamma)
    report = None
    for start in range(0, len(nodes), batch_size):
        part = infer_batch(bundle, g, x, nodes[start:start + batch_size], policy, adj=adj, **kw)
        report = part if report is None else report.merge(part)
    return report


def vanilla_predict(bundle: ModelBundle, g: Graph, x, nodes, depth: int | None = None,
                    adj: NormalizedAdjacency | None = None) -> np.ndarray:
    """Fixed-depth prediction from full-graph precomputed features (class ids)."""
    depth = bundle.k if depth is None else depth
    if adj is None:
        adj = normalize(g, bundle.gamma)
    df = precompute_depths(adj, x, depth, bundle.mode)
    feats = combine(df, depth, bundle.s2gc_divisor)[np.asarray(nodes)]
    return predict(bundle.stack[depth], feats).argmax(axis=1)


def vanilla_full_graph_ledger(bundle: ModelBundle, adj: NormalizedAdjacency, f: int,
                              depth: int | None = None) -> MacLedger:
    """MACs of propagating the whole graph ``depth`` times and classifying every node."""
    depth = bundle.k if depth is None else depth
    ledger = MacLedger()
    ledger.add("propagation", depth * count_spmm(adj.nnz, f))
    if bundle.mode is Combinator.S2GC:
        ledger.add("propagation", depth * adj.n * f)
    ledger.add("classification", bundle.stack[depth].n_macs(adj.n))
    return ledger
