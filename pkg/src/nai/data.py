"""Dataset bundles: binary persistence, inductive views and SBM generators."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph

MAGIC = b"NAIB"
VERSION = 1
_HEADER = struct.Struct("<4sI7Q")
HEADER_SIZE = _HEADER.size


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetBundle:
    """Graph, features, labels and the three disjoint node sets.

    ``labels`` holds a class id per node, ``-1`` where unknown.
    ``labeled`` is V_l, ``unlabeled`` V_u (used for validation), ``test`` V_test.
    """

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray
    n_classes: int

    def __post_init__(self):
        check_splits(self.graph.n, self.labeled, self.unlabeled, self.test)
        if self.features.shape[0] != self.graph.n:
            raise BundleError("feature rows do not match graph size")
        if len(self.labels) != self.graph.n:
            raise BundleError("label vector does not match graph size")
        for name in ("labeled", "test"):
            if np.any(self.labels[getattr(self, name)] < 0):
                raise BundleError(f"labels missing on {name} nodes")

    @property
    def train(self) -> np.ndarray:
        return np.sort(np.concatenate([self.labeled, self.unlabeled]))


def check_splits(n: int, *splits) -> None:
    seen = np.zeros(n, dtype=bool)
    for s in splits:
        s = np.asarray(s)
        if len(s) and (s.min() < 0 or s.max() >= n):
            raise BundleError("split node outside graph")
        if len(np.unique(s)) != len(s) or np.any(seen[s]):
            raise BundleError("splits overlap")
        seen[s] = True


def _i64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<i8").tobytes()


def dumps(b: DatasetBundle) -> bytes:
    g = b.graph
    n, f = b.features.shape
    head = _HEADER.pack(MAGIC, VERSION, n, g.m, f, b.n_classes,
                        len(b.labeled), len(b.unlabeled), len(b.test))
    body = [_i64(g.row_offsets), _i64(g.col_indices),
            np.ascontiguousarray(b.features, dtype="<f8").tobytes(), _i64(b.labels),
            _i64(b.labeled), _i64(b.unlabeled), _i64(b.test)]
    return head + b"".join(body)


def loads(buf: bytes) -> DatasetBundle:
    if len(buf) < _HEADER.size:
        raise BundleError("truncated bundle header")
    magic, version, n, m, f, c, nl, nu, nt = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BundleError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BundleError(f"unsupported bundle version {version}")
    pos = _HEADER.size

    def take(count, dtype):
        nonlocal pos
        size = count * 8
        if pos + size > len(buf):
            raise BundleError("truncated bundle")
        out = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(dtype[1:])
        pos += size
        return out

    offsets = take(n + 1, "<i8")
    cols = take(2 * m, "<i8")
    feats = take(n * f, "<f8").reshape(n, f)
    labels = take(n, "<i8")
    splits = [take(k, "<i8") for k in (nl, nu, nt)]
    if pos != len(buf):
        raise BundleError("trailing bytes after bundle")
    if offsets[0] != 0 or offsets[-1] != 2 * m or np.any(np.diff(offsets) < 0):
        raise BundleError("corrupt CSR offsets")
    if len(cols) and (cols.min() < 0 or cols.max() >= n):
        raise BundleError("corrupt CSR indices")
    g = Graph(n=int(n), m=int(m), row_offsets=offsets, col_indices=cols,
              degrees=np.diff(offsets))
    return DatasetBundle(g, feats, labels, *splits, n_classes=int(c))


def save_bundle(b: DatasetBundle, path) -> None:
    Path(path).write_bytes(dumps(b))


def load_bundle(path) -> DatasetBundle:
    return loads(Path(path).read_bytes())


def read_split(path) -> np.ndarray:
    toks = Path(path).read_text().split()
    return np.array([int(t) for t in toks], dtype=np.int64)


def write_split(nodes, path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in nodes))


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on ``nodes`` (sorted), relabeled to ``0..len(nodes)-1``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = g.edges()
    keep = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
    return build_graph(remap[e[keep]], len(nodes))


def inductive_train_view(b: DatasetBundle):
    """``(graph, features, nodes)`` restricted to V_l and V_u.

    ``nodes[i]`` is the original id of row ``i``; test nodes and all their
    edges are absent, so degrees and ``m`` refer to the training graph only.
    """
    nodes = b.train
    return induced_subgraph(b.graph, nodes), b.features[nodes], nodes


def positions(nodes, subset) -> np.ndarray:
    """Row positions of ``subset`` inside the sorted id array ``nodes``."""
    pos = np.searchsorted(nodes, subset)
    if np.any(pos >= len(nodes)) or np.any(nodes[np.minimum(pos, len(nodes) - 1)] != subset):
        raise ValueError("subset not contained in nodes")
    return pos


def random_splits(n: int, fractions, rng):
    rng = np.random.default_rng(rng)
    perm = rng.permutation(n)
    a = int(round(fractions[0] * n))
    b = a + int(round(fractions[1] * n))
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])


_DENSE_PAIRS = 20_000_000


def _block_edges(rng, lo_a, na, lo_b, nb, p, same):
    if p <= 0 or na == 0 or nb == 0:
        return np.empty((0, 2), dtype=np.int64)
    if na * nb <= _DENSE_PAIRS:
        hit = rng.random((na, nb)) < p
        if same:
            hit = np.triu(hit, 1)
        i, j = np.nonzero(hit)
    else:
        total = na * (na - 1) // 2 if same else na * nb
        count = rng.binomial(total, p)
        i = rng.integers(0, na, size=count)
        j = rng.integers(0, nb, size=count)
    return np.stack([i + lo_a, j + lo_b], axis=1).astype(np.int64)


def synth_sbm(blocks: int, sizes, p_in: float, p_out: float, f: int, class_signal: float,
              seed, fractions=(0.1, 0.4, 0.5)) -> DatasetBundle:
    """Stochastic block model with Gaussian features; labels are block ids.

    ``sizes`` is one size for every block or a list. Class ``j`` shifts
    feature dimension ``j mod f`` by ``class_signal``.
    """
    sizes = [int(sizes)] * blocks if np.isscalar(sizes) else [int(s) for s in sizes]
    if blocks < 1 or len(sizes) != blocks or min(sizes) < 1:
        raise ValueError("need at least one block and positive block sizes")
    if f < 1:
        raise ValueError("need at least one feature")
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise ValueError("edge probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    lo = np.concatenate([[0], np.cumsum(sizes)])
    n = int(lo[-1])
    parts = []
    for a in range(blocks):
        for b in range(a, blocks):
            parts.append(_block_edges(rng, lo[a], sizes[a], lo[b], sizes[b],
                                      p_in if a == b else p_out, a == b))
    g = build_graph(np.concatenate(parts), n)
    labels = np.repeat(np.arange(blocks), sizes).astype(np.int64)
    x = rng.standard_normal((n, f))
    x[np.arange(n), labels % f] += class_signal
    labeled, unlabeled, test = random_splits(n, fractions, rng)
    return DatasetBundle(g, x, labels, labeled, unlabeled, test, n_classes=blocks)
