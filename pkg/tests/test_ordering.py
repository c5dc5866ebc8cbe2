import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from coflowd.model import LoadMatrix
from coflowd.ordering import (DualVar, bottleneck_prefix, check_dual_feasibility,
                              dual_objective, random_order, sincronia_order)

HAND = np.array([[2.0, 1.0], [1.0, 2.0]])


def test_hand_example():
    o = sincronia_order(HAND, [1, 1])
    assert o.pi == (1, 0)
    assert o.primal_C.tolist() == [3.0, 2.0]
    assert o.primal_cost() == 5.0
    assert [(d.port, d.coflows, d.value) for d in o.duals] == [(0, (0, 1), 0.5), (1, (1,), 0.25)]
    # f_0({0,1}) = (9 + 5) / 2 = 7, f_1({1}) = 4
    assert dual_objective(o) == pytest.approx(7 * 0.5 + 4 * 0.25)
    assert (check_dual_feasibility(o) >= -1e-12).all()
    assert o.rank.tolist() == [1, 0]


def test_single_coflow():
    o = sincronia_order(np.array([[3.0], [1.0]]), [1.0])
    assert o.pi == (0,) and o.primal_C[0] == 3.0
    one = sincronia_order(np.array([[3.0]]), [1.0])
    assert dual_objective(one) == pytest.approx(3.0)
    assert check_dual_feasibility(one)[0] == pytest.approx(0.0, abs=1e-15)


def test_identical_coflows_deterministic():
    mu = np.ones((4, 5))
    a = sincronia_order(mu)
    assert a.pi == sincronia_order(mu).pi
    # ties always pick the lowest position as the lowest priority
    assert a.pi == (4, 3, 2, 1, 0)


def test_zero_over_zero_excluded():
    # coflow 1 has no load at the bottleneck port 0 but positive weight -> ratio inf;
    # coflow 2 gets weight 0 and no bottleneck load -> 0/0, not a candidate
    mu = np.array([[4.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    o = sincronia_order(mu, [1.0, 1.0, 0.0])
    assert o.pi[-1] == 0
    assert sorted(o.pi) == [0, 1, 2]


def test_input_validation():
    with pytest.raises(ValueError):
        sincronia_order(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        sincronia_order(HAND, [1, -1])
    with pytest.raises(ValueError):
        sincronia_order(-HAND)
    with pytest.raises(ValueError):
        sincronia_order(HAND, [1, 1, 1])


def _weighted_best(mu, w):
    """Exhaustive search of the best single-machine-style bottleneck permutation."""
    best = np.inf
    for pi in itertools.permutations(range(mu.shape[1])):
        best = min(best, float(w[list(pi)] @ bottleneck_prefix(mu, pi)))
    return best


def test_primal_c_is_bottleneck_prefix():
    rng = np.random.default_rng(0)
    for _ in range(50):
        mu = rng.uniform(0, 5, (4, 6))
        o = sincronia_order(mu, rng.uniform(0.1, 2, 6))
        assert np.allclose(o.primal_C[list(o.pi)], bottleneck_prefix(mu, o.pi), rtol=1e-12)


def test_primal_within_factor_two_of_permutation_optimum():
    rng = np.random.default_rng(1)
    for _ in range(30):
        mu = rng.uniform(0.1, 3, (3, 5))
        w = rng.uniform(0.1, 2, 5)
        o = sincronia_order(mu, w)
        assert o.primal_cost() <= 2 * _weighted_best(mu, w) + 1e-9


loads = st.integers(1, 6).flatmap(lambda L: st.integers(1, 8).flatmap(
    lambda n: arrays(np.float64, (L, n), elements=st.floats(0.01, 100.0))))


@settings(max_examples=200, deadline=None)
@given(mu=loads, data=st.data())
def test_certificate_properties(mu, data):
    n = mu.shape[1]
    w = np.array(data.draw(st.lists(st.floats(0.01, 10.0), min_size=n, max_size=n)))
    o = sincronia_order(mu, w)
    assert sorted(o.pi) == list(range(n))
    assert all(d.value >= 0 for d in o.duals)
    slack = check_dual_feasibility(o)
    assert (slack >= -1e-9 * max(1.0, w.max())).all()
    dual = dual_objective(o)
    assert dual <= o.primal_cost() * (1 + 1e-9)
    assert o.primal_cost() <= 2 * dual * (1 + 1e-9)
    c = data.draw(st.floats(0.01, 100.0))
    assert sincronia_order(mu * c, w).pi == o.pi
    assert sincronia_order(mu, w * c).pi == o.pi


def test_weight_trajectory_recorded():
    o = sincronia_order(HAND, [1, 1])
    assert len(o.weight_trajectory) == 3
    assert o.weight_trajectory[1].tolist() == [0.0, 0.5]


def test_bottleneck_prefix_batch():
    rng = np.random.default_rng(2)
    stack = rng.uniform(0, 1, (5, 3, 4))
    pi = (2, 0, 3, 1)
    out = bottleneck_prefix(stack, pi)
    for r in range(5):
        assert np.allclose(out[r], bottleneck_prefix(stack[r], pi))


def test_dualvar_mask_and_ids():
    assert DualVar(0, (0, 2, 5), 1.0).mask == 0b100101
    o = sincronia_order(LoadMatrix(HAND, coflow_ids=(10, 20)))
    assert o.coflow_ids() == [20, 10]


def test_random_order_is_permutation():
    p = random_order(9, np.random.default_rng(3))
    assert sorted(p) == list(range(9))
