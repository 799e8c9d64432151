import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nai.classifiers import ClassifierStack
from nai.gates import (GateStack, GateTrainConfig, carry_update, gate_exit_depth, gate_forward,
                       gate_routing, penalty, route_inference, train_gates)
from nai.nn import DenseParams, Tensor
from nai.propagation import Combinator, stationary
from nai.verify import _toy, fd_gate


def test_saturated_penalty_masks_second():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((6, 2))
    x = rng.standard_normal((5, 3))
    mask, _ = gate_forward(w, x, x, theta=np.full(5, 1000.0))
    assert np.all(mask == [0, 1])


def test_zero_weight_tie_goes_first():
    mask, e = gate_forward(np.zeros((4, 2)), np.ones(2), np.ones(2), theta=np.zeros(1))
    assert np.allclose(e, 0.5) and mask.tolist() == [[1.0, 0.0]]


def test_antisymmetric_halves_give_half():
    top = np.random.default_rng(1).standard_normal((3, 2))
    w = np.vstack([top, -top])
    x = np.random.default_rng(2).standard_normal((4, 3))
    _, e = gate_forward(w, x, x)
    assert np.allclose(e, 0.5)


def test_gate_shape_mismatch():
    with pytest.raises(ValueError):
        gate_forward(np.zeros((6, 2)), np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        gate_forward(np.zeros((4, 2)), np.ones(2), np.ones(3))


def test_carry_update_cases():
    xl, xh = np.array([[1.0, 2.0]]), np.array([[9.0, 9.0]])
    assert carry_update(np.array([[1, 0]]), xl, xh).tolist() == [[1.0, 2.0]]
    assert carry_update(np.array([[0, 1]]), xl, xh).tolist() == [[9.0, 9.0]]
    with pytest.raises(ValueError):
        carry_update(np.array([[0.5, 0.5]]), xl, xh)
    with pytest.raises(ValueError):
        carry_update(np.array([[1, 1]]), xl, xh)


def test_carry_never_selected_stays_stationary():
    rng = np.random.default_rng(3)
    xinf = rng.standard_normal((1, 3))
    carry = xinf
    for _ in range(4):
        carry = carry_update(np.array([[0, 1]]), rng.standard_normal((1, 3)), carry)
    assert np.array_equal(carry, xinf)


def test_exit_depth_cases():
    assert gate_exit_depth([(0, 1), (1, 0)], 5) == 2
    assert gate_exit_depth([(0, 1)] * 4, 5) == 5
    assert gate_exit_depth([(1, 0), (0, 1), (0, 1)], 4) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6))
def test_penalty_forces_second_column_after_selection(seed, k):
    # adversarial gates: every gate strongly prefers to select
    rng = np.random.default_rng(seed)
    f, n = 3, 12
    gates = GateStack(f, k, {l: np.tile([[50.0, -50.0]], (2 * f, 1)) for l in range(1, k)})
    x_inf = np.abs(rng.standard_normal((n, f)))
    xs = {l: np.abs(rng.standard_normal((n, f))) for l in range(1, k)}
    probs = {l: np.full((n, 2), 0.5) for l in range(1, k + 1)}
    _, history = gate_routing(gates, {l: Tensor(w) for l, w in gates.weights.items()}, xs, x_inf,
                              probs, rng=rng)
    if not history:
        return
    firsts = np.hstack([h.data for h in history])
    assert np.all(firsts.sum(axis=1) <= 1)
    assert firsts[:, 0].sum() > 0
    for j in range(1, len(history)):
        theta = penalty([h.data for h in history[:j]])
        chosen_before = firsts[:, :j].sum(axis=1) > 0.5
        assert np.all(theta[chosen_before] > 999.0)
        # e_1 - theta < e_2 for any e on the simplex
        assert np.all(1.0 - theta[chosen_before] < 0.0)


def test_route_inference_partition():
    rng = np.random.default_rng(4)
    gates = GateStack.init(3, 5, rng)
    xs = {l: rng.standard_normal((40, 3)) for l in range(1, 5)}
    depth = route_inference(gates, xs, rng.standard_normal((40, 3)), 2, 4)
    assert depth.shape == (40,) and np.all((depth >= 2) & (depth <= 4))


def _trained_stack(seed):
    g, x, df, labels, stack, splits, rng = _toy(seed, n=24)
    return g, x, df, labels, stack, splits, rng


def test_classifiers_bit_identical_across_gate_training():
    g, x, df, labels, stack, splits, rng = _trained_stack(0)
    before = stack.copy()
    gates = GateStack.init(x.shape[1], stack.k, rng)
    cfg = GateTrainConfig(lr=0.05, epochs=20, patience=10)
    out = train_gates(gates, stack, df, stationary(g, x), labels, splits.labeled, splits.val, cfg, 0)
    for l in range(1, stack.k + 1):
        assert all(np.array_equal(a, b) for a, b in zip(before[l].arrays(), stack[l].arrays()))
    assert out.depths() == [1, 2]


def test_k1_is_noop():
    g, x, df, labels, _, splits, rng = _toy(1, k=1)
    stack = ClassifierStack(Combinator.SGC, x.shape[1], 3, 1)
    stack[1] = DenseParams.init((x.shape[1], 3), rng)
    gates = GateStack.init(x.shape[1], 1, rng)
    assert gates.weights == {}
    out = train_gates(gates, stack, df, stationary(g, x), labels, splits.labeled, splits.val,
                      GateTrainConfig(epochs=3), 0)
    assert out.weights == {}


def test_untrained_classifiers_rejected():
    g, x, df, labels, stack, splits, rng = _trained_stack(2)
    del stack.classifiers[1]
    with pytest.raises(ValueError):
        train_gates(GateStack.init(x.shape[1], 3, rng), stack, df, stationary(g, x), labels,
                    splits.labeled, splits.val, GateTrainConfig(epochs=2), 0)


@pytest.mark.parametrize("seed", range(5))
def test_soft_gate_gradient(seed):
    assert fd_gate(seed) < 1e-4


def test_gate_checkpoint_round_trip(tmp_path):
    gates = GateStack.init(4, 5, 0, mu=500.0)
    gates.save(tmp_path / "g.nai")
    back = GateStack.load(tmp_path / "g.nai")
    assert back.depths() == [1, 2, 3, 4] and back.mu == 500.0
    assert all(np.array_equal(back.weights[l], gates.weights[l]) for l in back.depths())
