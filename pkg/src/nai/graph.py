"""Undirected graph storage, adjacency normalization and k-hop frontiers."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

DENSE_EIG_CAP = 2000


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph in CSR form.

    Every undirected edge is stored twice (once per endpoint); self-loops are
    never stored, ``degrees`` therefore excludes them.
    """

    n: int
    m: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray = field(repr=False)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices))
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))


def build_graph(edges, n: int) -> Graph:
    """Build a simple undirected graph from an iterable of ``(u, v)`` pairs.

    Duplicate edges (in either direction) and self-loops are dropped.
    """
    if n <= 0:
        raise ValueError("graph needs at least one node")
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    e = e.reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError(f"node id out of range [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(np.sort(e, axis=1), axis=0)
    m = len(e)
    both = np.concatenate([e, e[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    degrees = np.bincount(both[:, 0], minlength=n).astype(np.int64)
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=row_offsets[1:])
    return Graph(n=n, m=m, row_offsets=row_offsets, col_indices=both[:, 1].copy(), degrees=degrees)


def read_edge_list(path, n: int | None = None) -> Graph:
    """Read whitespace separated ``u v`` lines; ``#`` starts a comment."""
    pairs = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        u, v = line.split()[:2]
        pairs.append((int(u), int(v)))
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=-1)
    return build_graph(pairs, n)


def write_edge_list(g: Graph, path) -> None:
    lines = [f"# n={g.n} m={g.m}"] + [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class NormalizedAdjacency:
    """``D~^(gamma-1) (A + I) D~^(-gamma)`` stored as CSR with explicit diagonal."""

    matrix: sp.csr_matrix
    gamma: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_nnz(self, rows=None) -> np.ndarray:
        counts = np.diff(self.matrix.indptr)
        return counts if rows is None else counts[rows]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize(g: Graph, gamma: float = 0.5) -> NormalizedAdjacency:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    a = g.to_scipy() + sp.identity(g.n, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    dt = (g.degrees + 1).astype(np.float64)
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    a.data = dt[rows] ** (gamma - 1.0) * a.data * dt[a.indices] ** (-gamma)
    return NormalizedAdjacency(matrix=a, gamma=float(gamma))


@dataclass(frozen=True)
class FrontierCone:
    """Layered BFS closure of a batch: ``layers[t]`` holds every node within t hops."""

    layers: list

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def hops(self) -> np.ndarray:
        """Hop distance of every node in the outermost layer, aligned with it."""
        outer = self.layers[-1]
        dist = np.full(len(outer), self.depth, dtype=np.int64)
        for t in range(self.depth - 1, -1, -1):
            dist[np.isin(outer, self.layers[t])] = t
        return dist


def _expand(g: Graph, frontier: np.ndarray) -> np.ndarray:
    if len(frontier) == 0:
        return frontier
    starts = g.row_offsets[frontier]
    lens = g.row_offsets[frontier + 1] - starts
    total = int(lens.sum())
    # flat positions of every neighbor slot in col_indices
    shift = np.repeat(starts - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return g.col_indices[np.arange(total) + shift]


def k_hop_frontier(g: Graph, batch, depth: int) -> FrontierCone:
    batch = np.unique(np.asarray(batch, dtype=np.int64))
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if batch.min() < 0 or batch.max() >= g.n:
        raise ValueError("batch node id not in graph")
    seen = np.zeros(g.n, dtype=bool)
    seen[batch] = True
    layers = [batch]
    frontier = batch
    for _ in range(depth):
        nbrs = _expand(g, frontier)
        new = np.unique(nbrs[~seen[nbrs]])
        seen[new] = True
        frontier = new
        layers.append(np.flatnonzero(seen))
    return FrontierCone(layers=layers)


def second_eigenvalue(adj: NormalizedAdjacency, cap: int = DENSE_EIG_CAP) -> float:
    """Second largest eigenvalue of the normalized adjacency (dense solver).

    All ``gamma`` give the same spectrum since ``A_hat`` is similar to the
    symmetric normalization, which is what gets diagonalized.
    """
    n = adj.n
    if n < 2:
        raise ValueError("second eigenvalue undefined for a single node")
    if n > cap:
        raise ValueError(f"n={n} exceeds the dense eigensolver cap {cap}")
    return float(spectrum(adj)[-2])


def spectrum(adj: NormalizedAdjacency) -> np.ndarray:
    """Ascending eigenvalues of ``A_hat`` via its symmetric similar form."""
    a = adj.matrix.tocoo()
    # diagonal of A_hat is (d+1)^(-1) for every gamma
    dt = 1.0 / adj.matrix.diagonal()
    sym_vals = a.data * dt[a.row] ** (0.5 - adj.gamma) * dt[a.col] ** (adj.gamma - 0.5)
    s = np.zeros((adj.n, adj.n))
    s[a.row, a.col] = sym_vals
    return np.linalg.eigvalsh((s + s.T) / 2)
