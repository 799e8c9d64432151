"""Gate mechanics on hand-made inputs: masks, penalty and carried features."""
import numpy as np

from nai.gates import GateStack, carry_update, gate_exit_depth, gate_forward, gate_routing, penalty
from nai.nn import Tensor

rng = np.random.default_rng(0)
f = 3
x_l = rng.standard_normal((4, f))
x_inf = rng.standard_normal((4, f))

mask, e = gate_forward(np.zeros((2 * f, 2)), x_l, x_inf)
print("zero gate: e =", e[0], "mask =", mask[0], "(ties select)")

theta = penalty([np.ones(4)])
print("penalty after one selection:", theta.round(3))
mask, _ = gate_forward(np.zeros((2 * f, 2)), x_l, x_inf, theta=theta)
print("mask under saturated penalty:", mask[0])

print("carry after (1,0):", carry_update(np.array([[1, 0]]), x_l[:1], x_inf[:1]).round(3),
      " x_l =", x_l[0].round(3))
print("exit depth of [(0,1),(1,0),(0,1)] with k=4:", gate_exit_depth([(0, 1), (1, 0), (0, 1)], 4))

# training-mode routing with gates that always want to select
k = 5
gates = GateStack(f, k, {l: np.tile([[20.0, -20.0]], (2 * f, 1)) for l in range(1, k)})
xs = {l: np.abs(rng.standard_normal((6, f))) for l in range(1, k)}
probs = {l: np.full((6, 2), 0.5) for l in range(1, k + 1)}
_, hist = gate_routing(gates, {l: Tensor(w) for l, w in gates.weights.items()}, xs,
                       np.abs(rng.standard_normal((6, f))), probs, rng=rng)
print("\nfirst mask column per depth (rows are nodes):")
print(np.hstack([h.data for h in hist]).astype(int))
