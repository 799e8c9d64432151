import numpy as np
import pytest

from nai import checkpoint
from nai.classifiers import ClassifierStack, TrainConfig, accuracy, predict, train_teacher
from nai.graph import build_graph, normalize
from nai.nn import DenseParams
from nai.propagation import Combinator, combine, precompute_depths

from conftest import random_bundle


def _separable(rng, n=200):
    y = rng.integers(0, 2, n)
    x = rng.standard_normal((n, 4))
    x[:, 0] += np.where(y == 1, 4.0, -4.0)
    return x, y


def _identity_df(x, k=1, mode="sgc"):
    return precompute_depths(normalize(build_graph([], len(x))), x, k, mode)


def test_separable_teacher(rng):
    x, y = _separable(rng)
    df = _identity_df(x)
    cfg = TrainConfig(lr=0.05, epochs=200, patience=50, dropout=0.0)
    p = train_teacher(df, y, np.arange(100), np.arange(100, 200), cfg, seed=0)
    assert accuracy(predict(p, x[100:]), y[100:]) >= 0.95


def test_single_class_degenerates(rng):
    x = rng.standard_normal((60, 3))
    y = np.zeros(60, dtype=int)
    cfg = TrainConfig(lr=0.05, epochs=50, dropout=0.0)
    p = train_teacher(_identity_df(x), y, np.arange(40), np.arange(40, 60), cfg, seed=0, c=2)
    # accuracy on held-out nodes equals the class prior, here 1
    assert accuracy(predict(p, x[40:]), y[40:]) == 1.0


def test_teacher_needs_splits(rng):
    x = rng.standard_normal((10, 2))
    with pytest.raises(ValueError):
        train_teacher(_identity_df(x), np.zeros(10, int), [], [1], TrainConfig(), 0)
    with pytest.raises(ValueError):
        train_teacher(_identity_df(x), np.zeros(10, int), [0], [], TrainConfig(), 0)


def test_accuracy_examples(rng):
    y = rng.integers(0, 2, 1000)
    assert accuracy(y, y) == 1.0
    assert abs(accuracy(rng.integers(0, 2, 1000), y) - 0.5) <= 0.1
    assert accuracy(np.eye(2)[y], y) == 1.0


def test_stack_widths(rng):
    stack = ClassifierStack(Combinator.SIGN, 4, 3, 3)
    stack[2] = DenseParams.init((12, 3), rng)
    with pytest.raises(ValueError):
        stack[1] = DenseParams.init((4, 3), rng)
    with pytest.raises(ValueError):
        stack[4] = DenseParams.init((20, 3), rng)
    with pytest.raises(ValueError):
        stack[1] = DenseParams.init((8, 2), rng)
    with pytest.raises(KeyError):
        stack[3]
    assert not stack.complete()


@pytest.mark.parametrize("mode", ["sgc", "sign", "s2gc"])
def test_stack_input_matches_combine(mode, rng):
    x = rng.standard_normal((6, 4))
    df = _identity_df(x, k=3, mode=mode)
    stack = random_bundle(rng, f=4, k=3, mode=mode).stack
    for l in range(1, 4):
        assert combine(df, l).shape[1] == stack.input_dim(l) == stack[l].in_dim


def test_stack_checkpoint_round_trip(tmp_path, rng):
    stack = random_bundle(rng, mode="sign", hidden=(7, 5)).stack
    stack.save(tmp_path / "s.nai")
    back = ClassifierStack.load(tmp_path / "s.nai")
    assert back.k == stack.k and Combinator(back.mode) is Combinator.SIGN
    for l in range(1, 4):
        assert back[l].sizes == stack[l].sizes
        assert all(np.array_equal(a, b) for a, b in zip(back[l].arrays(), stack[l].arrays()))


def test_checkpoint_errors(tmp_path, rng):
    buf = checkpoint.dumps({"kind": "x"}, [rng.standard_normal((2, 3))])
    meta, arrays = checkpoint.loads(buf)
    assert meta == {"kind": "x"} and arrays[0].shape == (2, 3)
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXX" + buf[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(buf[:4] + (2).to_bytes(4, "little") + buf[8:])
    for cut in (6, 20, len(buf) - 3):
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.loads(buf[:cut])
    (tmp_path / "g.nai").write_bytes(buf)
    with pytest.raises(checkpoint.CheckpointError):
        ClassifierStack.load(tmp_path / "g.nai")
