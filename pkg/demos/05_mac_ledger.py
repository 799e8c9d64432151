"""Where the multiply-accumulates go: full-graph SGC, batched inference and both stationary counts."""
import numpy as np

from nai.classifiers import ClassifierStack
from nai.data import synth_sbm
from nai.graph import normalize
from nai.inference import InferencePolicy, ModelBundle, infer, vanilla_full_graph_ledger
from nai.metrics import PHASES
from nai.nn import DenseParams
from nai.propagation import Combinator
from nai.verify import _recount_case, check_full_graph

rng = np.random.default_rng(0)
data = synth_sbm(4, 500, 0.02, 0.002, 32, 1.0, seed=0)
f, c, k = 32, 4, 5
stack = ClassifierStack(Combinator.SGC, f, c, k)
for l in range(1, k + 1):
    stack[l] = DenseParams.init((f, c), rng)
model = ModelBundle(stack)
adj = normalize(data.graph)

full = vanilla_full_graph_ledger(model, adj, f)
print(f"full graph: k*nnz*f + n*f*c = {k}*{adj.nnz}*{f} + {adj.n}*{f}*{c} = {full.total}")
print(check_full_graph().line())

for mode in ("factorized", "naive"):
    for pol in (InferencePolicy.fixed(k), InferencePolicy("distance", 1, k, 1.0)):
        rep = infer(model, data.graph, data.features, data.test, pol, ledger_mode=mode)
        per = {p: rep.ledger.counts[p] / len(data.test) for p in PHASES if p != "sampling"}
        name = "fixed" if pol.t_min == k else f"T_s={pol.t_s}"
        print(f"{mode:<10} {name:<8} " + "  ".join(f"{p} {v:9.0f}" for p, v in per.items()))

same, _, _ = _recount_case(0, "s2gc", "gate", "naive", True)
print("\nledger equals loop recount on a small S2GC gate case:", same)
