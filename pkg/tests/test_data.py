import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nai.data import (HEADER_SIZE, MAGIC, VERSION, BundleError, DatasetBundle, dumps, induced_subgraph,
                      inductive_train_view, load_bundle, loads, positions, random_splits,
                      read_split, save_bundle, synth_sbm, write_split)
from nai.graph import build_graph

from conftest import path


def _bundle(seed=0, n=30):
    return synth_sbm(3, n // 3, 0.3, 0.05, 4, 1.0, seed)


def test_round_trip(tmp_path):
    b = _bundle()
    save_bundle(b, tmp_path / "b.naib")
    c = load_bundle(tmp_path / "b.naib")
    assert c.features.tobytes() == b.features.tobytes()
    assert np.array_equal(c.graph.col_indices, b.graph.col_indices)
    assert np.array_equal(c.graph.row_offsets, b.graph.row_offsets)
    for name in ("labels", "labeled", "unlabeled", "test"):
        assert np.array_equal(getattr(c, name), getattr(b, name))
    assert c.n_classes == 3 and dumps(c) == dumps(b)


def test_corrupt_files():
    buf = dumps(_bundle())
    with pytest.raises(BundleError, match="magic"):
        loads(b"NAIX" + buf[4:])
    with pytest.raises(BundleError, match="version"):
        loads(buf[:4] + (9).to_bytes(4, "little") + buf[8:])
    for cut in (10, HEADER_SIZE + 5, len(buf) - 1):
        with pytest.raises(BundleError, match="truncated"):
            loads(buf[:cut])
    with pytest.raises(BundleError, match="trailing"):
        loads(buf + b"\0" * 8)


def test_split_overlap_rejected():
    g = path(4)
    x = np.zeros((4, 1))
    y = np.zeros(4, dtype=np.int64)
    with pytest.raises(BundleError):
        DatasetBundle(g, x, y, np.array([0, 1]), np.array([1]), np.array([3]), 1)
    with pytest.raises(BundleError):
        DatasetBundle(g, x, y, np.array([0]), np.array([1]), np.array([4]), 1)
    with pytest.raises(BundleError):
        DatasetBundle(g, x, np.array([0, 0, 0, -1]), np.array([0]), np.array([1]), np.array([3]), 1)


def test_flickr_shaped_header():
    # header only: n=89250, f=500, c=7, 44625/22312/22313 split
    head = struct.pack("<4sI7Q", MAGIC, VERSION, 89250, 449878, 500, 7, 44625, 22312, 22313)
    assert len(head) == HEADER_SIZE
    with pytest.raises(BundleError, match="truncated"):
        loads(head)


def test_train_view_path():
    g = path(3)
    b = DatasetBundle(g, np.eye(3), np.array([0, 1, 1]), np.array([0]), np.array([1]), np.array([2]), 2)
    tg, tx, nodes = inductive_train_view(b)
    assert tg.n == 2 and tg.m == 1 and nodes.tolist() == [0, 1]
    assert tg.edges().tolist() == [[0, 1]]
    assert np.array_equal(tx, np.eye(3)[:2])


def test_train_view_all_nodes():
    g = path(4)
    b = DatasetBundle(g, np.zeros((4, 2)), np.zeros(4, dtype=np.int64), np.array([0, 1]),
                      np.array([2, 3]), np.array([], dtype=np.int64), 1)
    tg, _, _ = inductive_train_view(b)
    assert np.array_equal(tg.edges(), g.edges())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_no_leakage(seed):
    b = _bundle(seed, n=60)
    tg, _, nodes = inductive_train_view(b)
    test = set(b.test.tolist())
    original = nodes[tg.edges()]
    assert not any(int(u) in test or int(v) in test for u, v in original)
    full = {tuple(e) for e in b.graph.edges().tolist()}
    assert all(tuple(sorted(e)) in full for e in original.tolist())
    touches_test = any(u in test or v in test for u, v in full)
    if touches_test:
        assert tg.m < b.graph.m


def test_two_cliques():
    b = synth_sbm(2, 5, 1.0, 0.0, 3, 1.0, 0)
    assert b.graph.m == 2 * 10
    assert np.all(b.graph.degrees == 4)
    for u, v in b.graph.edges():
        assert b.labels[u] == b.labels[v]


def test_sbm_deterministic_and_errors():
    a, c = _bundle(3), _bundle(3)
    assert dumps(a) == dumps(c)
    with pytest.raises(ValueError):
        synth_sbm(0, 5, 0.1, 0.1, 2, 1.0, 0)
    with pytest.raises(ValueError):
        synth_sbm(2, [5], 0.1, 0.1, 2, 1.0, 0)
    with pytest.raises(ValueError):
        synth_sbm(2, 5, 1.5, 0.1, 2, 1.0, 0)


def test_no_signal_gives_prior_accuracy():
    b = synth_sbm(2, 500, 0.0, 0.0, 4, 0.0, 0)
    x, y = b.features, b.labels
    # nearest class mean fitted on labeled nodes, scored on test nodes
    means = np.stack([x[b.labeled][y[b.labeled] == c].mean(axis=0) for c in range(2)])
    pred = np.argmin(((x[b.test, None, :] - means) ** 2).sum(axis=2), axis=1)
    assert abs(np.mean(pred == y[b.test]) - 0.5) < 0.06


def test_large_sparse_blocks_path():
    b = synth_sbm(2, 5000, 0.001, 0.0001, 2, 1.0, 0)
    assert b.graph.n == 10000
    assert 20000 < b.graph.m < 30000


def test_split_files(tmp_path):
    write_split([4, 1, 7], tmp_path / "s.txt")
    assert read_split(tmp_path / "s.txt").tolist() == [4, 1, 7]


def test_positions_and_splits():
    nodes = np.array([1, 4, 6, 9])
    assert positions(nodes, np.array([6, 1])).tolist() == [2, 0]
    with pytest.raises(ValueError):
        positions(nodes, np.array([5]))
    a, b, c = random_splits(100, (0.1, 0.4, 0.5), 0)
    assert (len(a), len(b), len(c)) == (10, 40, 50)
    assert len(np.unique(np.concatenate([a, b, c]))) == 100


def test_induced_subgraph_relabels():
    g = build_graph([(0, 2), (2, 4), (1, 3)], 5)
    h = induced_subgraph(g, [0, 2, 4])
    assert h.edges().tolist() == [[0, 1], [1, 2]]
