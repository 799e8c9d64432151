"""Depth-layered feature propagation, combinators and the stationary state."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .graph import Graph, NormalizedAdjacency


class Combinator(str, Enum):
    SGC = "sgc"
    SIGN = "sign"
    S2GC = "s2gc"


def spmm_step(adj: NormalizedAdjacency, x: np.ndarray, rows=None) -> np.ndarray:
    """One application of ``A_hat``.

    With ``rows`` only those output rows are computed and returned (in the
    order given); the caller only needs ``x`` to be valid on their neighbors.
    """
    if x.shape[0] != adj.n:
        raise ValueError(f"feature rows {x.shape[0]} != graph size {adj.n}")
    if rows is None:
        return adj.matrix @ x
    return adj.matrix[rows] @ x


@dataclass(frozen=True)
class DepthFeatures:
    stack: list
    mode: Combinator = Combinator.SGC

    @property
    def k(self) -> int:
        return len(self.stack) - 1

    def width(self, l: int) -> int:
        f = self.stack[0].shape[1]
        return (l + 1) * f if Combinator(self.mode) is Combinator.SIGN else f


def precompute_depths(adj: NormalizedAdjacency, x: np.ndarray, k: int,
                      mode: Combinator | str = Combinator.SGC) -> DepthFeatures:
    if k < 1:
        raise ValueError("k must be at least 1")
    stack = [np.asarray(x, dtype=np.float64)]
    for _ in range(k):
        stack.append(spmm_step(adj, stack[-1]))
    return DepthFeatures(stack=stack, mode=Combinator(mode))


def combine_rows(parts, mode: Combinator | str, s2gc_divisor: str = "literal") -> np.ndarray:
    """Combine per-depth features ``parts = [X^(0), ..., X^(l)]``.

    S2GC divides the sum of ``l + 1`` terms by ``l`` (``"literal"``) or by
    ``l + 1`` (``"mean"``). ``l = 0`` returns ``X^(0)`` for both.
    """
    mode = Combinator(mode)
    l = len(parts) - 1
    if mode is Combinator.SGC:
        return parts[-1]
    if mode is Combinator.SIGN:
        return np.concatenate(parts, axis=1)
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    if s2gc_divisor == "literal":
        return total / max(l, 1)
    if s2gc_divisor == "mean":
        return total / (l + 1)
    raise ValueError(f"unknown s2gc divisor {s2gc_divisor!r}")


def combine(df: DepthFeatures, l: int, s2gc_divisor: str = "literal") -> np.ndarray:
    if not 0 <= l <= df.k:
        raise ValueError(f"depth {l} outside [0, {df.k}]")
    return combine_rows(df.stack[:l + 1], df.mode, s2gc_divisor)


@dataclass(frozen=True)
class StationaryState:
    """Rank-one form of ``X^(inf)``: row i equals ``coeff[i] * aggregate``."""

    coeff: np.ndarray
    aggregate: np.ndarray
    _dense: dict = field(default_factory=dict, repr=False, compare=False)

    def rows(self, nodes) -> np.ndarray:
        return np.outer(self.coeff[nodes], self.aggregate)

    def dense(self) -> np.ndarray:
        if "x" not in self._dense:
            self._dense["x"] = np.outer(self.coeff, self.aggregate)
        return self._dense["x"]


def stationary(g: Graph, x: np.ndarray, gamma: float = 0.5) -> StationaryState:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"feature rows {x.shape[0]} != graph size {g.n}")
    dt = (g.degrees + 1).astype(np.float64)
    coeff = dt ** gamma / (2 * g.m + g.n)
    aggregate = (dt ** (1.0 - gamma)) @ x
    return StationaryState(coeff=coeff, aggregate=aggregate)


def stationary_matrix(g: Graph, gamma: float = 0.5) -> np.ndarray:
    """Dense ``A_hat^(inf)`` evaluated entry by entry; O(n^2), for checks only."""
    dt = (g.degrees + 1).astype(np.float64)
    return np.outer(dt ** gamma, dt ** (1.0 - gamma)) / (2 * g.m + g.n)


def distance(x_l, x_inf) -> np.ndarray:
    """Row-wise l2 distance; works on single rows or stacked rows."""
    x_l, x_inf = np.asarray(x_l), np.asarray(x_inf)
    if x_l.shape != x_inf.shape:
        raise ValueError("distance needs equal shapes")
    return np.linalg.norm(x_l - x_inf, axis=-1)


def distance_trace(adj: NormalizedAdjacency, x: np.ndarray, st: StationaryState,
                   max_depth: int) -> np.ndarray:
    """Distances for every node at depths ``1..max_depth`` (shape ``(max_depth, n)``)."""
    xinf = st.dense()
    out = np.empty((max_depth, adj.n))
    cur = np.asarray(x, dtype=np.float64)
    for l in range(max_depth):
        cur = spmm_step(adj, cur)
        out[l] = distance(cur, xinf)
    return out


def distance_exit_depth(trace, t_s: float, t_min: int, t_max: int) -> int:
    """First depth ``t_min <= l < t_max`` with ``trace[l-1] < t_s``, else ``t_max``.

    ``trace[l-1]`` is the distance at depth ``l``.
    """
    if not 1 <= t_min <= t_max:
        raise ValueError("need 1 <= t_min <= t_max")
    for l in range(t_min, t_max):
        if trace[l - 1] < t_s:
            return l
    return t_max


@dataclass(frozen=True)
class DepthBound:
    log_term: float | None
    neighbor_term: float | None

    @property
    def applicable(self) -> bool:
        return self.log_term is not None

    @property
    def value(self) -> float:
        terms = [t for t in (self.log_term, self.neighbor_term) if t is not None]
        return min(terms) if terms else math.inf


def depth_bound(g: Graph, lam2: float, t_s: float, node: int,
                neighbor_depths=None) -> DepthBound:
    """Upper bound on a node's personalized depth.

    ``log_term`` is ``log_{lam2}(t_s * sqrt((d_i + 1) / (2m + n)))``; it is
    ``None`` when ``lam2`` or the log argument falls outside ``(0, 1)``.
    ``neighbor_depths`` are the realized depths of every node; when given, the
    neighbor term ``max_j L_j + 1`` is included.
    """
    arg = t_s * math.sqrt((g.degrees[node] + 1) / (2 * g.m + g.n))
    log_term = None
    if 0.0 < lam2 < 1.0 and 0.0 < arg < 1.0:
        log_term = math.log(arg) / math.log(lam2)
    nb_term = None
    if neighbor_depths is not None:
        nbrs = g.neighbors(node)
        if len(nbrs):
            nb_term = float(np.max(np.asarray(neighbor_depths)[nbrs]) + 1)
    return DepthBound(log_term=log_term, neighbor_term=nb_term)
