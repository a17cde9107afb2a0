"""MLP forward/backward and Adam tests, finite-difference oracle first."""

import numpy as np
import pytest

from util_grad import fd_grads, rel_err

from distillbench.nn import Adam, Mlp, count_parameters


def away_from_relu_kinks(net, x, margin=1e-3):
    """FD is only valid where the net is differentiable; reject near-kink inputs."""
    h = np.atleast_2d(x)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if i == len(net.weights) - 1:
            return True
        if np.abs(z).min() < margin:
            return False
        h = np.maximum(z, 0.0)
    return True


def forward_by_loops(net, x):
    """Independent scalar-loop forward pass."""
    h = [float(v) for v in x]
    last = len(net.weights) - 1
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for r in range(w.shape[0]):
            s = float(b[r])
            for c in range(w.shape[1]):
                s += float(w[r, c]) * h[c]
            out.append(s if li == last else max(s, 0.0))
        h = out
    return np.array(h)


def test_param_count_expert_architecture():
    # 2*24+24 + 24*48+48 + 48*3+3
    assert 2 * 24 + 24 + 24 * 48 + 48 + 48 * 3 + 3 == 1419
    assert count_parameters((2, 24, 48, 3)) == 1419


def test_param_count_small_and_wide():
    assert count_parameters((1, 1)) == 2
    # 4*24+24 + 24*48+48 + 48*2+2
    assert 4 * 24 + 24 + 24 * 48 + 48 + 48 * 2 + 2 == 1418
    assert count_parameters((4, 24, 48, 2)) == 1418


def test_param_count_matches_live_network():
    net = Mlp.init((3, 7, 5), np.random.default_rng(0))
    total = sum(p.size for p in net.params())
    assert total == net.param_count == count_parameters((3, 7, 5))


def test_param_count_validation():
    with pytest.raises(ValueError):
        count_parameters((4,))
    with pytest.raises(ValueError):
        count_parameters((4, 0, 2))


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        sizes = tuple(int(s) for s in rng.integers(1, 9, size=rng.integers(2, 5)))
        net = Mlp.init(sizes, rng)
        x = rng.normal(size=sizes[0])
        assert np.allclose(net.forward(x), forward_by_loops(net, x), atol=1e-12)


def test_forward_batch_matches_single():
    rng = np.random.default_rng(3)
    net = Mlp.init((4, 8, 3), rng)
    xs = rng.normal(size=(10, 4))
    batched = net.forward(xs)
    assert batched.shape == (10, 3)
    for i in range(10):
        assert np.allclose(batched[i], net.forward(xs[i]), atol=0.0)


def test_backward_matches_finite_differences_linear_loss():
    rng = np.random.default_rng(11)
    done = 0
    while done < 10:
        sizes = tuple(int(s) for s in rng.integers(1, 7, size=rng.integers(2, 5)))
        net = Mlp.init(sizes, rng)
        x = rng.normal(size=(4, sizes[0]))
        r = rng.normal(size=(4, sizes[-1]))
        if not away_from_relu_kinks(net, x):
            continue
        analytic = net.backward(x, r)
        numeric = fd_grads(lambda: float(np.sum(net.forward(x) * r)), net.params())
        assert rel_err(analytic, numeric) < 1e-4
        done += 1


def test_backward_matches_finite_differences_squared_loss():
    rng = np.random.default_rng(12)
    net = Mlp.init((3, 6, 2), rng)
    x = rng.normal(size=(8, 3))
    target = rng.normal(size=(8, 2))

    def loss():
        return float(np.mean((net.forward(x) - target) ** 2))

    upstream = 2.0 * (net.forward(x) - target) / target.size
    assert rel_err(net.backward(x, upstream), fd_grads(loss, net.params())) < 1e-4


def test_backward_one_neuron_analytic():
    net = Mlp((1, 1), [np.array([[2.0]])], [np.array([3.0])])
    x = np.array([[1.0]])
    y = net.forward(x)  # 5
    grads = net.backward(x, 2.0 * y)  # d/dp of (y - 0)^2
    assert grads[0][0, 0] == pytest.approx(10.0)
    assert grads[1][0] == pytest.approx(10.0)


def test_backward_rejects_bad_upstream_shape():
    net = Mlp.init((2, 3), np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.backward(np.zeros((4, 2)), np.zeros((4, 5)))


def test_init_is_seed_deterministic():
    a = Mlp.init((2, 24, 3), np.random.default_rng(99))
    b = Mlp.init((2, 24, 3), np.random.default_rng(99))
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)


def test_copy_is_independent():
    net = Mlp.init((2, 4, 2), np.random.default_rng(1))
    dup = net.copy()
    dup.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != dup.weights[0][0, 0]


def test_adam_zero_gradient_leaves_params_unchanged():
    params = [np.array([1.0, -2.0]), np.array([[3.0]])]
    before = [p.copy() for p in params]
    opt = Adam(lr=0.5)
    for _ in range(5):
        opt.step(params, [np.zeros_like(p) for p in params])
    for p, b in zip(params, before):
        assert np.array_equal(p, b)


def test_adam_constant_gradient_step_magnitude_approaches_lr():
    # With g constant, m_hat -> g and v_hat -> g^2, so each step is ~lr*sign(g).
    param = np.array([0.0])
    grad = np.array([2.5])
    opt = Adam(lr=1e-3)
    opt.step([param], [grad])
    assert abs(param[0] + 1e-3) < 1e-9  # first step is already -lr*sign(g)
    for _ in range(200):
        prev = param[0]
        opt.step([param], [grad])
        assert param[0] < prev
    assert abs((prev - param[0]) - 1e-3) < 1e-6


def test_adam_rejects_mismatched_state():
    opt = Adam()
    opt.step([np.zeros(2)], [np.ones(2)])
    with pytest.raises(ValueError):
        opt.step([np.zeros(2), np.zeros(3)], [np.ones(2), np.ones(3)])
