"""Oracle suites: closed forms against brute force, autodiff against finite differences,
ledger counts against an instrumented loop recount, and the depth bound."""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .classifiers import ClassifierStack, ce_loss
from .distillation import DistillConfig, Splits, multi_scale_loss, single_scale_loss
from .gates import GateStack, gate_loss
from .graph import Graph, build_graph, normalize, second_eigenvalue
from .inference import InferencePolicy, ModelBundle, infer_batch, vanilla_full_graph_ledger
from .metrics import PHASES
from .nn import DenseParams, Tensor, fd_check, one_hot, sample_gumbel, softmax_T
from .propagation import (Combinator, combine_rows, depth_bound, precompute_depths, stationary,
                          stationary_matrix)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def random_connected_graph(n: int, p: float, rng) -> Graph:
    """Random recursive tree plus independent extra edges with probability ``p``."""
    rng = np.random.default_rng(rng)
    tree = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    iu, ju = np.triu_indices(n, 1)
    extra = rng.random(len(iu)) < p
    return build_graph(tree + list(zip(iu[extra], ju[extra])), n)


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - t0)


# ----------------------------------------------------------------- stationary state

def check_stationary(n_graphs=50, max_n=50, gamma=0.5, power=200, seed=0,
                     tol_power=1e-6, tol_naive=1e-12) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst_p = worst_n = 0.0
        for _ in range(n_graphs):
            n = int(rng.integers(2, max_n + 1))
            g = random_connected_graph(n, float(rng.uniform(0.02, 0.3)), rng)
            x = rng.standard_normal((n, int(rng.integers(1, 9))))
            st = stationary(g, x, gamma)
            cur = x
            adj = normalize(g, gamma)
            for _ in range(power):
                cur = adj.matrix @ cur
            worst_p = max(worst_p, np.abs(cur - st.dense()).max())
            worst_n = max(worst_n, np.abs(stationary_matrix(g, gamma) @ x - st.dense()).max())
        ok = worst_p <= tol_power and worst_n <= tol_naive
        return ok, f"power max-abs {worst_p:.2e} (tol {tol_power:g}), naive {worst_n:.2e} (tol {tol_naive:g})"
    return _timed("stationary state", run)


# ----------------------------------------------------------------- gradients

def _toy(seed, n=16, f=5, c=3, k=3, mode="sgc", hidden=()):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.2, rng)
    x = rng.standard_normal((n, f))
    df = precompute_depths(normalize(g), x, k, mode)
    labels = rng.integers(0, c, size=n)
    labels[:c] = np.arange(c)
    stack = ClassifierStack(Combinator(mode), f, c, k)
    for l in range(1, k + 1):
        stack[l] = DenseParams.init((stack.input_dim(l), *hidden, c), rng)
    for p in stack.classifiers.values():
        for b in p.biases:
            b += rng.normal(scale=0.1, size=b.shape)
    splits = Splits(labeled=np.arange(6), train=np.arange(n), val=np.arange(6, n))
    return g, x, df, labels, stack, splits, rng


def fd_teacher(seed, hidden=()) -> float:
    _, _, df, labels, stack, splits, _ = _toy(seed, hidden=hidden)
    p = stack[stack.k]
    x = combine_rows(df.stack, df.mode)[splits.labeled]
    y = one_hot(labels[splits.labeled], stack.c)
    return fd_check(p.arrays(), lambda leaves: ce_loss(p, x, y, leaves, train_mode=False))


def fd_single_scale(seed, T=1.2, lam=0.6) -> float:
    _, _, df, labels, stack, splits, _ = _toy(seed)
    k = stack.k
    teacher = softmax_T(combine_rows(df.stack, df.mode) @ stack[k].weights[0] + stack[k].biases[0], T)
    teacher = teacher[splits.train]
    y = one_hot(labels[splits.labeled], stack.c)
    student = stack[1]
    x = combine_rows(df.stack[:2], df.mode)
    return fd_check(student.arrays(), lambda leaves: single_scale_loss(
        student, leaves, x, teacher, y, splits, T, lam, train_mode=False))


def fd_multi_scale(seed, mode="sgc") -> float:
    _, _, df, labels, stack, splits, rng = _toy(seed, mode=mode)
    k = stack.k
    cfg = DistillConfig(r=2)
    feats = {l: combine_rows(df.stack[:l + 1], df.mode) for l in range(1, k + 1)}
    y = one_hot(labels[splits.labeled], stack.c)
    students = list(range(1, k))
    sizes = [len(stack[l].arrays()) for l in students]
    s_vecs = [rng.normal(scale=0.5, size=stack.c) for _ in range(cfg.ensemble_size(k))]
    arrays = [a for l in students for a in stack[l].arrays()] + s_vecs

    def loss(leaves):
        student_leaves, pos = {}, 0
        for l, n_arr in zip(students, sizes):
            student_leaves[l] = leaves[pos:pos + n_arr]
            pos += n_arr
        return multi_scale_loss(stack, student_leaves, leaves[pos:], feats, y, splits, cfg,
                                train_mode=False)
    return fd_check(arrays, loss)


def fd_gate(seed) -> float:
    g, x, df, labels, stack, splits, rng = _toy(seed)
    k, f = stack.k, x.shape[1]
    gates = GateStack.init(f, k, rng)
    nodes = splits.labeled
    st = stationary(g, x)
    xs = {l: df.stack[l][nodes] for l in range(1, k)}
    probs = {l: softmax_T(combine_rows(df.stack[:l + 1], df.mode)[nodes] @ stack[l].weights[0]
                          + stack[l].biases[0]) for l in range(1, k + 1)}
    y = one_hot(labels[nodes], stack.c)
    noises = {l: sample_gumbel((len(nodes), 2), rng) for l in range(1, k)}
    depths = gates.depths()
    return fd_check([gates.weights[l] for l in depths], lambda leaves: gate_loss(
        gates, dict(zip(depths, leaves)), xs, st.rows(nodes), probs, y, hard=False, noises=noises))


def check_gradients(seeds=range(5), tol=1e-4) -> CheckResult:
    suites = {"teacher CE": fd_teacher, "teacher CE (hidden layer)": lambda s: fd_teacher(s, (7,)),
              "single-scale": fd_single_scale, "multi-scale joint": fd_multi_scale,
              "multi-scale joint (SIGN)": lambda s: fd_multi_scale(s, "sign"),
              "soft gate": fd_gate}

    def run():
        worst = {name: max(fn(s) for s in seeds) for name, fn in suites.items()}
        ok = all(v < tol for v in worst.values())
        return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return _timed("gradient suite", run)


# ----------------------------------------------------------------- MAC recount

class Counter:
    def __init__(self):
        self.counts = {p: 0 for p in PHASES}

    def mac(self, phase, acc, a, b):
        self.counts[phase] += 1
        return acc + a * b


def _bfs_hops(g: Graph, sources) -> dict:
    dist = {int(s): 0 for s in sources}
    q = deque(dist)
    while q:
        u = q.popleft()
        for v in g.neighbors(u):
            v = int(v)
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _dense_forward(cnt: Counter, params: DenseParams, row):
    h = list(row)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for o in range(w.shape[1]):
            acc = 0.0
            for j in range(w.shape[0]):
                acc = cnt.mac("classification", acc, h[j], w[j, o])
            out.append(acc + b[o])
        h = out if i == len(params.weights) - 1 else [max(v, 0.0) for v in out]
    return h


def recount_infer(bundle: ModelBundle, g: Graph, x, batch, policy: InferencePolicy,
                  ledger_mode="factorized", shrink_cone=False):
    """Loop-level re-execution of batched inference counting every multiply-accumulate.

    Returns ``(counts, exit_depth, predicted)``.
    """
    cnt = Counter()
    x = np.asarray(x, dtype=np.float64)
    n, f = x.shape
    batch = [int(b) for b in batch]
    gamma = bundle.gamma
    dt = g.degrees + 1.0
    two_m_n = 2 * g.m + g.n
    adj = normalize(g, gamma).matrix
    # stationary rows
    xinf = {}
    if ledger_mode == "factorized":
        agg = [0.0] * f
        for j in range(n):
            w = dt[j] ** (1 - gamma)
            for c in range(f):
                agg[c] = cnt.mac("stationary", agg[c], w, x[j, c])
        for i in batch:
            coef = dt[i] ** gamma / two_m_n
            xinf[i] = [cnt.mac("stationary", 0.0, coef, agg[c]) for c in range(f)]
    else:
        for i in batch:
            row = [0.0] * f
            for j in range(n):
                a = dt[i] ** gamma * dt[j] ** (1 - gamma) / two_m_n
                for c in range(f):
                    row[c] = cnt.mac("stationary", row[c], a, x[j, c])
            xinf[i] = row
    hops = _bfs_hops(g, batch)
    active = list(batch)
    hist = {i: [list(x[i])] for i in batch}
    prev = {j: list(x[j]) for j in range(n)}
    exit_depth, predicted = {}, {}
    mode = bundle.mode

    def classify(i, l):
        feats = combine_rows([np.array([h]) for h in hist[i]], mode, bundle.s2gc_divisor)[0]
        logits = _dense_forward(cnt, bundle.stack[l], feats)
        exit_depth[i], predicted[i] = l, int(np.argmax(logits))

    for l in range(1, policy.t_max + 1):
        reach = policy.t_max - l
        if shrink_cone:
            h_act = _bfs_hops(g, active)
            rows = [v for v, d in h_act.items() if d <= reach]
        else:
            rows = [v for v, d in hops.items() if d <= reach]
        cur = {}
        for r in rows:
            out = [0.0] * f
            for p in range(adj.indptr[r], adj.indptr[r + 1]):
                a, col = adj.data[p], adj.indices[p]
                for c in range(f):
                    out[c] = cnt.mac("propagation", out[c], a, prev[col][c])
            cur[r] = out
        for i in batch:
            hist[i].append(cur.get(i, [0.0] * f))
        if mode is Combinator.S2GC:
            for i in active:
                for c in range(f):
                    cnt.mac("propagation", 0.0, 1.0, cur[i][c])
        prev = {j: cur.get(j, [0.0] * f) for j in range(n)}
        if l < policy.t_min:
            continue
        still = []
        for i in active:
            if l == policy.t_max:
                classify(i, l)
                continue
            if policy.mode == "distance":
                acc = 0.0
                for c in range(f):
                    d = cur[i][c] - xinf[i][c]
                    acc = cnt.mac("distance_or_gate", acc, d, d)
                leave = math.sqrt(acc) < policy.t_s
            else:
                w = bundle.gates.weights[l]
                inp = cur[i] + xinf[i]
                z = []
                for o in range(2):
                    acc = 0.0
                    for j in range(2 * f):
                        acc = cnt.mac("distance_or_gate", acc, inp[j], w[j, o])
                    z.append(acc)
                e0 = 1.0 / (1.0 + math.exp(z[1] - z[0]))
                leave = e0 >= 1.0 - e0
            if leave:
                classify(i, l)
            else:
                still.append(i)
        active = still
    order = batch
    return (cnt.counts, np.array([exit_depth[i] for i in order]),
            np.array([predicted[i] for i in order]))


def _recount_case(seed, mode, policy_kind, ledger_mode, shrink):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 61))
    g = random_connected_graph(n, 0.08, rng)
    f, c, k = 3, 3, 3
    x = rng.standard_normal((n, f))
    stack = ClassifierStack(Combinator(mode), f, c, k)
    for l in range(1, k + 1):
        stack[l] = DenseParams.init((stack.input_dim(l), 4, c), rng)
    gates = GateStack.init(f, k, rng) if policy_kind == "gate" else None
    bundle = ModelBundle(stack, 0.5, gates)
    batch = rng.choice(n, size=int(rng.integers(1, 8)), replace=False)
    if policy_kind == "gate":
        policy = InferencePolicy("gate", 1, k)
    else:
        policy = InferencePolicy("distance", 1, k, float(rng.uniform(0.5, 2.0)))
    rep = infer_batch(bundle, g, x, batch, policy, ledger_mode=ledger_mode, shrink_cone=shrink)
    counts, exits, preds = recount_infer(bundle, g, x, batch, policy, ledger_mode, shrink)
    same = (counts == rep.ledger.counts and np.array_equal(exits, rep.exit_depth)
            and np.array_equal(preds, rep.predicted))
    return same, counts, rep.ledger.counts


def check_full_graph(seed=0) -> CheckResult:
    """Vanilla SGC over the whole graph: ``k * nnz * f + n * f * c`` with ``c = f``."""
    def run():
        rng = np.random.default_rng(seed)
        n, f, k = 40, 6, 3
        g = random_connected_graph(n, 0.1, rng)
        adj = normalize(g)
        stack = ClassifierStack(Combinator.SGC, f, f, k)
        stack[k] = DenseParams.init((f, f), rng)
        ledger = vanilla_full_graph_ledger(ModelBundle(stack), adj, f)
        # brute force: one MAC per stored entry and feature, per depth; then a dense layer
        brute = 0
        for _ in range(k):
            for r in range(n):
                brute += (adj.matrix.indptr[r + 1] - adj.matrix.indptr[r]) * f
        brute += n * f * f
        formula = k * adj.nnz * f + n * f * f
        return ledger.total == brute == formula, f"ledger {ledger.total}, recount {brute}, kmf+nf^2 {formula}"
    return _timed("full-graph SGC count", run)


def check_ledger(n_cases=4, seed=0) -> CheckResult:
    def run():
        bad, total = [], 0
        for mode in ("sgc", "sign", "s2gc"):
            for kind in ("distance", "gate"):
                for ledger_mode in ("factorized", "naive"):
                    for shrink in (False, True):
                        for s in range(n_cases):
                            total += 1
                            ok, got, want = _recount_case(seed * 1000 + s, mode, kind, ledger_mode, shrink)
                            if not ok:
                                bad.append((mode, kind, ledger_mode, shrink, s, got, want))
        return not bad, f"{total - len(bad)}/{total} cases exact" + (f"; first mismatch {bad[0]}" if bad else "")
    return _timed("MAC ledger recount", run)


# ----------------------------------------------------------------- depth bound

def realized_depths(g: Graph, x, t_s_values, gamma=0.5, max_depth=20000) -> dict:
    """First depth ``l >= 1`` at which each node's distance drops below ``t_s``
    (``max_depth + 1`` when it never does within ``max_depth``)."""
    adj = normalize(g, gamma)
    xinf = stationary(g, x, gamma).dense()
    out = {t: np.full(g.n, max_depth + 1, dtype=np.int64) for t in t_s_values}
    cur = np.asarray(x, dtype=np.float64)
    for l in range(1, max_depth + 1):
        cur = adj.matrix @ cur
        dist = np.linalg.norm(cur - xinf, axis=1)
        pending = False
        for t, depths in out.items():
            hit = (depths > max_depth) & (dist < t)
            depths[hit] = l
            pending |= bool(np.any(depths > max_depth))
        if not pending:
            break
    return out


def check_depth_bound(n_graphs=20, max_n=100, t_s_values=(0.01, 0.1, 1.0), f=8, seed=0,
                      gamma=0.5) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        checked = log_viol = nb_viol = 0
        example = None
        for _ in range(n_graphs):
            n = int(rng.integers(10, max_n + 1))
            g = random_connected_graph(n, float(rng.uniform(0.01, 0.1)), rng)
            x = rng.standard_normal((n, f))
            x /= np.linalg.norm(x, axis=1, keepdims=True)
            lam2 = second_eigenvalue(normalize(g, gamma))
            depths = realized_depths(g, x, t_s_values, gamma)
            for t_s, L in depths.items():
                for i in range(n):
                    b = depth_bound(g, lam2, t_s, i, L)
                    if not b.applicable:
                        continue
                    checked += 1
                    if L[i] > b.log_term + 1e-9:
                        log_viol += 1
                    if b.neighbor_term is not None and L[i] > b.neighbor_term:
                        nb_viol += 1
                        if example is None:
                            example = (t_s, i, int(L[i]), int(g.degrees[i]),
                                       [int(L[j]) for j in g.neighbors(i)])
        ok = log_viol == 0 and nb_viol == 0
        detail = (f"{checked} node checks; log-term violations {log_viol}, "
                  f"neighbor-term violations {nb_viol}")
        if example:
            detail += (f"; e.g. T_s={example[0]} node {example[1]} depth {example[2]} "
                       f"(degree {example[3]}) with neighbor depths {example[4]}")
        return ok, detail
    return _timed("depth bound", run)


SUITES = {"stationary": check_stationary, "gradients": check_gradients, "ledger": check_ledger,
          "full_graph": check_full_graph, "depth_bound": check_depth_bound}


def run_all(names=None) -> list:
    names = list(SUITES) if names is None else names
    return [SUITES[n]() for n in names]
