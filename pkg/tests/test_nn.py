import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfodamp.nn import Adam, Mlp


def zero_net(sizes, bounds=None):
    return Mlp([(np.zeros((a, b)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])], bounds)


def numeric_grad(f, flat, h=1e-5):
    g = np.zeros_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def test_zero_actor_outputs_midpoint():
    net = zero_net([3, 4, 2], (-0.2, 0.4))
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.allclose(net.forward(x), 0.1, atol=1e-15, rtol=0)


def test_large_final_bias_saturates_to_upper_bound():
    net = zero_net([2, 3, 1], (-0.2, 0.2))
    net.layers[-1][1][:] = 50.0
    assert net.forward(np.ones(2))[0] == pytest.approx(0.2, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bounded_output_for_random_params(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.init([6, 8, 8, 2], rng, (-0.2, 0.2), final_scale=3.0)
    out = net.forward(rng.normal(0, 10, (400, 6)))
    assert np.all(np.isfinite(out)) and np.all((out >= -0.2) & (out <= 0.2))


def test_zero_critic_and_linear_closed_form():
    assert zero_net([5, 4, 1]).forward(np.ones(5))[0] == 0.0
    w = np.array([[0.5], [-2.0], [3.0]])
    net = Mlp([(w, np.array([0.25]))])
    x = np.array([1.0, 2.0, -1.0])
    assert net.forward(x)[0] == pytest.approx(0.5 - 4.0 - 3.0 + 0.25)
    assert net.forward(x)[0] == net.forward(x)[0]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        zero_net([3, 1]).forward(np.ones(4))
    with pytest.raises(ValueError):
        Mlp([(np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 1)), np.zeros(1))])
    with pytest.raises(ValueError):
        Mlp([(np.zeros((3, 4)), np.zeros(3))])


def test_linear_layer_gradients():
    w = np.array([[0.5], [-2.0], [3.0]])
    net = Mlp([(w, np.array([0.25]))])
    x = np.array([1.0, 2.0, -1.0])
    _, acts = net.forward(x, keep=True)
    (gw, gb), gin = net.backward(acts, np.ones(1))
    assert np.array_equal(gw[:, 0], x) and gb[0] == 1.0
    assert np.array_equal(gin[0], w[:, 0])


def test_relu_blocks_negative_units():
    w1 = np.array([[1.0, -1.0]])
    net = Mlp([(w1, np.zeros(2)), (np.array([[1.0], [1.0]]), np.zeros(1))])
    _, acts = net.forward(np.array([2.0]), keep=True)
    (g1, gb1, _, _), _ = net.backward(acts, np.ones(1))
    assert g1[0, 1] == 0.0 and gb1[1] == 0.0 and g1[0, 0] == 2.0


@pytest.mark.parametrize("bounds", [None, (-0.3, 0.2)])
def test_backprop_matches_finite_differences(bounds):
    rng = np.random.default_rng(4)
    for _ in range(10):
        sizes = [int(rng.integers(2, 9)), int(rng.integers(2, 9)), int(rng.integers(2, 9)),
                 int(rng.integers(1, 4))]
        net = Mlp.init(sizes, rng, bounds, final_scale=0.5)
        x = rng.normal(size=(3, sizes[0]))
        up = rng.normal(size=(3, sizes[-1]))
        _, acts = net.forward(x, keep=True)
        grads, gin = net.backward(acts, up)

        def f():
            return float(np.sum(up * net.forward(x)))

        assert rel_err(Mlp.flatten(grads), numeric_grad(f, net.flat)) < 1e-4
        xf = x.ravel()
        num_in = numeric_grad(lambda: float(np.sum(up * net.forward(xf.reshape(x.shape)))), xf)
        assert rel_err(gin.ravel(), num_in) < 1e-4


def test_flat_buffer_shares_memory():
    net = Mlp.init([3, 4, 1], np.random.default_rng(0))
    net.flat[:] = 0.0
    assert all(np.all(p == 0) for p in net.params())
    other = net.copy()
    other.flat += 1.0
    assert np.all(net.flat == 0)
    net.set_params(other.params())
    assert np.all(net.flat == 1.0) and net.sizes == [3, 4, 1]


def test_adam_first_step_moves_by_lr():
    p = [np.array([1.0, -1.0, 2.0])]
    opt = Adam(p, lr=0.01)
    opt.step(p, [np.array([3.0, -0.5, 0.0])])
    assert p[0] == pytest.approx([0.99, -0.99, 2.0], abs=1e-9)


def test_adam_minimizes_quadratic():
    p = [np.array([5.0, -3.0])]
    opt = Adam(p, lr=0.05)
    for _ in range(2000):
        opt.step(p, [2 * p[0]])
    assert np.max(np.abs(p[0])) < 1e-2
