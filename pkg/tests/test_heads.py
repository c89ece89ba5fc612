"""Value heads: TD targets, tabular updates, the shared-trunk net and target nets."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hra.errors import InvalidArgument
from hra.heads import (MAX_RULE, MEAN_RULE, MULTI_HEAD, SINGLE_HEAD, SharedTrunkNet, TabularHead,
                       TargetNetwork, TargetRule, td_target)
from hra.mdp import DecomposedTransition
from hra.verify import finite_difference_error


def test_td_target_rules():
    assert td_target(TargetRule(MAX_RULE, 0.5), 1.0, [0.0, 4.0], False) == 3.0
    assert td_target(TargetRule(MEAN_RULE, 0.5), 1.0, [0.0, 4.0], False) == 2.0
    assert td_target(TargetRule(MEAN_RULE, 0.5), 1.0, [0.0, 4.0], True) == 1.0
    with pytest.raises(InvalidArgument):
        td_target(TargetRule(), 0.0, [], False)
    with pytest.raises(InvalidArgument):
        TargetRule("softmax")


def test_tabular_update_alpha_one_and_half():
    head = TabularHead(2, 1.0, TargetRule(MEAN_RULE, 0.9))
    head.table[1] = np.array([2.0, 4.0])
    t = DecomposedTransition(0, 1, 1, 0.5, (0.5, 0.0))
    assert head.update(t, 0) == pytest.approx(0.5 + 0.9 * 3.0)
    assert head.update(t, 1) == pytest.approx(0.9 * 3.0)
    half = TabularHead(2, 0.5, TargetRule(MAX_RULE, 0.9))
    half.table[1] = np.array([2.0, 4.0])
    assert half.update(t, 0) == pytest.approx(0.5 * (0.5 + 3.6))
    with pytest.raises(InvalidArgument):
        half.update(t, 2)


def test_unvisited_entries_read_zero():
    head = TabularHead(3)
    assert head.value(7, 2) == 0.0
    assert np.all(head.row(7) == 0)
    assert len(head) == 0


def _small_net(masked, seed=0):
    inputs = [[0, 1], [2, 3, 4]] if masked else None
    return SharedTrunkNet(5, 6, 2, 3, inputs, seed=seed)


@pytest.mark.parametrize("masked", [False, True])
@pytest.mark.parametrize("mode", [SINGLE_HEAD, MULTI_HEAD])
def test_gradients_match_finite_differences(masked, mode):
    rng = np.random.default_rng(1)
    net = _small_net(masked)
    X = rng.normal(size=(3, 5))
    A = rng.integers(3, size=3)
    Y = rng.normal(size=(3, 2)) if mode == MULTI_HEAD else rng.normal(size=3)
    assert finite_difference_error(net, X, A, Y, mode) < 1e-6


def test_aggregation_sums_heads_and_is_frozen():
    net = _small_net(False)
    x = np.random.default_rng(0).normal(size=5)
    heads, total = net.forward(x)
    assert np.allclose(heads.sum(axis=0), total)
    before = net.agg.tobytes()
    net.update(x, [1], [[1.0, 2.0]], MULTI_HEAD, 0.1)
    net.update(x, [0], [3.0], SINGLE_HEAD, 0.1)
    assert net.agg.tobytes() == before
    with pytest.raises(ValueError):
        net.agg[0, 0] = 5.0


def test_masked_head_ignores_foreign_inputs():
    net = _small_net(True)
    x = np.zeros(5)
    y = x.copy()
    y[3] = 7.0  # only head 1 sees input 3
    h0, _ = net.forward(x)
    h1, _ = net.forward(y)
    assert np.allclose(h0[0], h1[0])
    rng = np.random.default_rng(0)
    for _ in range(20):
        net.update(rng.normal(size=(4, 5)), rng.integers(3, size=4), rng.normal(size=(4, 2)),
                   MULTI_HEAD, 0.05)
    assert np.all(net.W1[net.mask1 == 0] == 0)
    assert np.all(net.W2[net.mask2 == 0] == 0)


@pytest.mark.parametrize("masked", [False, True])
@pytest.mark.parametrize("mode", [SINGLE_HEAD, MULTI_HEAD])
def test_binary_path_matches_dense(masked, mode):
    a, b = _small_net(masked, 3), _small_net(masked, 3)
    on = np.array([0, 3])
    x = np.zeros(5)
    x[on] = 1.0
    ha, ta = a.forward(x)
    hb, tb = b.forward_binary(on)
    assert np.allclose(ha, hb) and np.allclose(ta, tb)
    y = np.array([0.5, -1.0]) if mode == MULTI_HEAD else 2.0
    a.update(x, [2], [y] if mode == SINGLE_HEAD else y[None], mode, 0.05)
    b.update_binary(on, 2, y, mode, 0.05)
    for p, q in zip(a.params, b.params):
        assert np.allclose(p, q, atol=1e-14)


def test_bad_update_arguments():
    net = _small_net(False)
    with pytest.raises(InvalidArgument):
        net.update(np.zeros(5), [0], [1.0], "both", 0.1)
    with pytest.raises(InvalidArgument):
        net.update(np.zeros(5), [3], [1.0], SINGLE_HEAD, 0.1)
    with pytest.raises(InvalidArgument):
        net.update(np.zeros(4), [0], [1.0], SINGLE_HEAD, 0.1)
    with pytest.raises(InvalidArgument):
        SharedTrunkNet(5, 7, 2, 3, [[0], [1]])


def test_checkpoint_round_trip(tmp_path):
    net = _small_net(True)
    net.save(tmp_path / "n.bin")
    back = SharedTrunkNet.load(tmp_path / "n.bin")
    x = np.arange(5.0)
    assert np.array_equal(net.forward(x)[1], back.forward(x)[1])
    assert np.array_equal(net.mask1, back.mask1)
    with pytest.raises(InvalidArgument):
        SharedTrunkNet.from_bytes(b"nope" + bytes(40))


def test_target_network_sync_period():
    live = _small_net(False)
    tn = TargetNetwork(live, period=3)
    x = np.ones(5)
    frozen = tn.forward(x)[1].copy()
    for i in range(2):
        live.update(x, [0], [10.0], SINGLE_HEAD, 0.01)
        tn.step()
        assert np.array_equal(tn.forward(x)[1], frozen)
    live.update(x, [0], [10.0], SINGLE_HEAD, 0.01)
    tn.step()
    assert np.array_equal(tn.forward(x)[1], live.forward(x)[1])
    assert TargetNetwork(live, 1).net is live
    with pytest.raises(InvalidArgument):
        TargetNetwork(live, 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), mode=st.sampled_from([SINGLE_HEAD, MULTI_HEAD]))
def test_small_step_reduces_loss(seed, mode):
    rng = np.random.default_rng(seed)
    net = SharedTrunkNet(4, 6, 2, 2, seed=seed)
    X = rng.normal(size=(3, 4))
    A = rng.integers(2, size=3)
    Y = rng.normal(size=(3, 2)) if mode == MULTI_HEAD else rng.normal(size=3)
    before = net.loss(X, A, Y, mode)
    net.update(X, A, Y, mode, 1e-4)
    assert net.loss(X, A, Y, mode) <= before + 1e-12
