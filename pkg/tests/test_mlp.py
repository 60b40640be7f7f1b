import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_diff
from nkc.mlp import Mlp, flatten


def reference_forward(net, x):
    """Layer recursion written out independently of Mlp.forward."""
    a = np.array(x, dtype=float)
    n = len(net.weights)
    for k in range(n):
        z = np.array([[sum(a[t, i] * net.weights[k][i, o] for i in range(a.shape[1])) + net.biases[k][o]
                       for o in range(net.weights[k].shape[1])] for t in range(a.shape[0])])
        last = k == n - 1
        a = z if last and net.output_activation == "linear" else np.maximum(z, 0.0)
    return a


def test_trivial_cases():
    zero = Mlp([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(zero(np.ones((2, 3))), 0.0)
    lin = Mlp([np.array([[2.0]])], [np.array([1.0])])
    assert lin(np.array([[3.0]]))[0, 0] == 7.0
    h, cache = lin.forward(np.array([[3.0]]))
    gw, gb = lin.backward(cache, np.array([[1.0]]))
    assert gw[0, 0] == 3.0 and gb[0] == 1.0


def test_forward_matches_reference(rng):
    for act in ("linear", "relu"):
        net = Mlp.init(int(rng.integers(1 << 30)), [4, 6, 5, 3], act)
        for b in net.biases:
            b += rng.normal(size=b.shape)
        x = rng.normal(size=(5, 4))
        np.testing.assert_allclose(net(x), reference_forward(net, x), rtol=1e-12, atol=1e-12)


def test_backward_matches_finite_differences(rng):
    for trial in range(50):
        dims = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(2, 5)))]
        act = "relu" if trial % 2 else "linear"
        net = Mlp.init(trial, dims, act)
        for b in net.biases:
            b += rng.normal(scale=0.5, size=b.shape)
        x = rng.normal(size=(3, dims[0]))
        gh = rng.normal(size=(3, dims[-1]))
        _, cache = net.forward(x)
        analytic = flatten(net.backward(cache, gh))
        theta = net.get_flat()

        def f(th):
            probe = net.copy()
            probe.set_flat(th)
            return float(np.sum(gh * probe(x)))

        numeric = central_diff(f, theta, 1e-5)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_zero_upstream_gives_zero_gradient(rng):
    net = Mlp.init(0, [3, 4, 2])
    _, cache = net.forward(rng.normal(size=(5, 3)))
    assert all(np.all(g == 0) for g in net.backward(cache, np.zeros((5, 2))))


def test_init_is_deterministic_and_counts():
    a, b = Mlp.init(7, [5, 100, 50, 3]), Mlp.init(7, [5, 100, 50, 3])
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    assert a.n_params == 5 * 100 + 100 + 100 * 50 + 50 + 50 * 3 + 3 == 5803
    assert Mlp.init(0, [50, 100, 50, 3]).n_params == 10303
    assert all(np.all(bias == 0) for bias in a.biases)
    assert np.std(a.weights[0]) == pytest.approx(np.sqrt(2 / 5), rel=0.1)


def test_relu_output_nonnegative(rng):
    net = Mlp.init(1, [4, 8, 3], "relu")
    assert np.all(net(rng.normal(size=(200, 4)) * 5) >= 0)


def test_forward_is_pure(rng):
    net = Mlp.init(2, [3, 5, 2])
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(net(x), net(x))


def test_errors(rng):
    net = Mlp.init(0, [3, 4, 2])
    with pytest.raises(ValueError):
        net(np.zeros((2, 4)))
    _, cache = Mlp.init(0, [3, 5, 2]).forward(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        net.backward(cache, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Mlp.init(0, [3, 0, 2])
    with pytest.raises(ValueError):
        Mlp.init(0, [3, 2], "tanh")


def test_json_round_trip(rng):
    net = Mlp.init(3, [3, 4, 2], "relu")
    back = Mlp.from_dict(json.loads(json.dumps(net.to_dict())))
    x = rng.normal(size=(10, 3))
    np.testing.assert_array_equal(back(x), net(x))
    assert back.output_activation == "relu"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.integers(0, 2**31 - 1))
def test_flat_round_trip(dims, seed):
    net = Mlp.init(seed, dims)
    theta = net.get_flat()
    assert theta.shape == (net.n_params,)
    other = Mlp.init(seed + 1, dims)
    other.set_flat(theta)
    np.testing.assert_array_equal(other.get_flat(), theta)
