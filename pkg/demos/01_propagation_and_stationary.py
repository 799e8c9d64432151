"""How fast do propagated features approach the stationary state, and who gets there first?"""
import numpy as np

from nai import build_graph, normalize, second_eigenvalue, stationary
from nai.propagation import distance_exit_depth, distance_trace, stationary_matrix
from nai.verify import random_connected_graph

rng = np.random.default_rng(0)

# K3 is stationary after one step
g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
x = np.eye(3)
print("K3 A_hat:\n", normalize(g).dense())
print("K3 distance after one step:", distance_trace(normalize(g), x, stationary(g, x), 1)[0])

# a sparse random graph: hubs converge faster than leaves
g = random_connected_graph(300, 0.01, rng)
adj = normalize(g, 0.5)
x = rng.standard_normal((g.n, 16))
x /= np.linalg.norm(x, axis=1, keepdims=True)
st = stationary(g, x)
trace = distance_trace(adj, x, st, 30)
lam2 = second_eigenvalue(adj)
print(f"\nn={g.n} m={g.m} lambda_2={lam2:.4f}")
print("max distance at depth 1, 5, 10, 30:", trace[[0, 4, 9, 29]].max(axis=1).round(4))

t_s = 0.05
depth = np.array([distance_exit_depth(trace[:, i], t_s, 1, 30) for i in range(g.n)])
deg = g.degrees
for lo, hi in [(1, 2), (3, 5), (6, 100)]:
    sel = (deg >= lo) & (deg <= hi)
    if sel.any():
        print(f"degree {lo}-{hi}: {sel.sum():3d} nodes, mean exit depth {depth[sel].mean():.2f}")

# rank-one form against the explicit limit matrix
print("\nrank-one vs dense limit, max abs diff:",
      np.abs(st.dense() - stationary_matrix(g) @ x).max())
