import io

import numpy as np
import pytest

from dieflow import nn


def scalar_forward_reference(net, x):
    """Independent loop-based re-implementation of the MLP forward pass."""
    out = []
    for row in np.atleast_2d(x):
        a = list(row)
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            z = [sum(w[i][j] * a[j] for j in range(len(a))) + b[i]
                 for i in range(len(b))]
            a = z if l == len(net.weights) - 1 else [np.tanh(v) for v in z]
        out.append(a)
    return np.array(out)


def fd_gradient(fn, arr, h=1e-5):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        fp = fn()
        arr[idx] = orig - h
        fm = fn()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return g


def test_forward_zero_net():
    net = nn.Mlp([3, 4, 2])
    for p in net.parameters:
        p[...] = 0.0
    y, _ = net.forward(np.ones((5, 3)))
    assert np.all(y == 0.0)


def test_forward_identity_linear_layer():
    net = nn.Mlp([2, 2])
    net.weights[0][...] = np.eye(2)
    net.biases[0][...] = 0.0
    x = np.array([[0.3, -1.2]])
    y, _ = net.forward(x)
    assert np.array_equal(y, x)


def test_forward_matches_scalar_reference():
    rng = np.random.default_rng(7)
    net = nn.Mlp([2, 16, 2], rng)
    x = rng.standard_normal((4, 2))
    y, _ = net.forward(x)
    ref = scalar_forward_reference(net, x)
    assert np.abs(y - ref).max() < 1e-12


def test_forward_shape_check():
    net = nn.Mlp([3, 2])
    with pytest.raises(ValueError):
        net.forward(np.ones((1, 4)))


def test_backward_zero_upstream():
    rng = np.random.default_rng(0)
    net = nn.Mlp([3, 8, 2], rng)
    y, cache = net.forward(rng.standard_normal((6, 3)))
    grads, dx = net.backward(cache, np.zeros_like(y))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(dx == 0.0)


def test_backward_linear_least_squares():
    # single linear layer, squared loss: gradient = 2 X^T (Xw - y) form
    rng = np.random.default_rng(1)
    net = nn.Mlp([3, 1])
    net.weights[0][...] = rng.standard_normal((1, 3))
    net.biases[0][...] = 0.0
    x = rng.standard_normal((10, 3))
    target = rng.standard_normal((10, 1))
    y, cache = net.forward(x)
    grads, _ = net.backward(cache, 2.0 * (y - target))
    expected = 2.0 * (x * (y - target)).sum(axis=0)
    assert np.abs(grads[0][0] - expected).max() < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    widths = [rng.integers(2, 6), rng.integers(3, 64), rng.integers(2, 5)]
    net = nn.Mlp(list(map(int, widths)), rng)
    x = rng.standard_normal((3, widths[0]))
    w = rng.standard_normal((3, widths[-1]))

    def loss():
        y, _ = net.forward(x)
        return float(np.sum(w * y))

    y, cache = net.forward(x)
    grads, _ = net.backward(cache, w)
    for p, g in zip(net.parameters, grads):
        fd = fd_gradient(loss, p)
        denom = max(np.abs(fd).max(), 1e-8)
        assert np.abs(fd - g).max() / denom < 1e-4


def test_adam_zero_gradient_no_change():
    rng = np.random.default_rng(2)
    net = nn.Mlp([2, 4, 1], rng)
    before = [p.copy() for p in net.parameters]
    adam = nn.Adam(net.parameters, lr=0.1)
    adam.step(net.parameters, [np.zeros_like(p) for p in net.parameters])
    for b, p in zip(before, net.parameters):
        assert np.array_equal(b, p)


def test_adam_first_step_magnitude():
    p = np.array([1.0])
    adam = nn.Adam([p], lr=1e-3)
    adam.step([p], [np.array([0.37])])
    # bias-corrected first step is ~lr in magnitude
    assert abs((1.0 - p[0]) - 1e-3) < 1e-8


def test_adam_quadratic_convergence():
    w = np.array([5.0])
    adam = nn.Adam([w], lr=1e-2)
    for _ in range(2000):
        adam.step([w], [2.0 * w])
        if abs(w[0]) < 1e-2:
            break
    assert abs(w[0]) < 1e-2


def test_grad_clip():
    g = [np.full(4, 10.0)]
    norm = nn.clip_grads(g, 1.0)
    assert norm == pytest.approx(20.0)
    assert np.linalg.norm(g[0]) == pytest.approx(1.0)
    g2 = [np.full(4, 0.01)]
    nn.clip_grads(g2, 1.0)
    assert np.all(g2[0] == 0.01)


# --- heads -----------------------------------------------------------------

def test_categorical_near_deterministic():
    rng = np.random.default_rng(3)
    logits = np.tile([1000.0, 0.0, 0.0], (10_000, 1))
    actions, _, _ = nn.categorical_sample(logits, rng)
    assert np.mean(actions == 0) > 0.99


def test_categorical_uniform_entropy():
    _, _, ent = nn.categorical_sample(np.zeros((1, 3)), np.random.default_rng(0))
    assert abs(ent[0] - np.log(3.0)) < 1e-12


def test_log_softmax_normalized():
    rng = np.random.default_rng(4)
    logits = rng.normal(0, 3, (50, 7))
    logp = nn.log_softmax(logits)
    assert np.abs(np.exp(logp).sum(axis=1) - 1.0).max() < 1e-12


def test_categorical_sampling_deterministic_seed():
    logits = np.random.default_rng(5).normal(0, 1, (100, 4))
    a1, l1, _ = nn.categorical_sample(logits, np.random.default_rng(9))
    a2, l2, _ = nn.categorical_sample(logits, np.random.default_rng(9))
    assert np.array_equal(a1, a2) and np.array_equal(l1, l2)


def test_categorical_grads_finite_difference():
    rng = np.random.default_rng(6)
    logits = rng.normal(0, 1, (5, 4))
    actions = rng.integers(0, 4, 5)
    w_lp = rng.normal(0, 1, 5)
    w_ent = rng.normal(0, 1, 5)

    def loss():
        lp, ent = nn.categorical_logprob_entropy(logits, actions)
        return float(np.sum(w_lp * lp) + np.sum(w_ent * ent))

    analytic = nn.categorical_grads(logits, actions, w_lp, w_ent)
    fd = fd_gradient(loss, logits)
    assert np.abs(fd - analytic).max() / np.abs(fd).max() < 1e-4


def test_gaussian_sample_degenerate_std():
    mean = np.array([[0.3, -0.7]])
    actions, _, _ = nn.gaussian_sample(mean, np.full(2, -1000.0),
                                       np.random.default_rng(0))
    assert np.array_equal(actions, mean)


def test_gaussian_logprob_matches_density():
    rng = np.random.default_rng(7)
    mean = rng.normal(0, 1, (6, 3))
    log_std = rng.normal(0, 0.5, 3)
    actions = rng.normal(0, 1, (6, 3))
    lp = nn.gaussian_logprob(mean, log_std, actions)
    std = np.exp(log_std)
    ref = (-0.5 * ((actions - mean) / std) ** 2
           - np.log(std) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
    assert np.abs(lp - ref).max() < 1e-12


def test_gaussian_grads_finite_difference():
    rng = np.random.default_rng(8)
    mean = rng.normal(0, 1, (5, 3))
    log_std = rng.normal(0, 0.3, 3)
    actions = rng.normal(0, 1, (5, 3))
    w_lp = rng.normal(0, 1, 5)
    w_ent = rng.normal(0, 1, 5)

    def loss():
        lp = nn.gaussian_logprob(mean, log_std, actions)
        ent = np.full(5, float(np.sum(log_std + 0.5 * (nn.LOG_2PI + 1.0))))
        return float(np.sum(w_lp * lp) + np.sum(w_ent * ent))

    d_mean, d_log_std = nn.gaussian_grads(mean, log_std, actions, w_lp, w_ent)
    fd_mean = fd_gradient(loss, mean)
    assert np.abs(fd_mean - d_mean).max() / np.abs(fd_mean).max() < 1e-4
    fd_ls = fd_gradient(loss, log_std)
    assert np.abs(fd_ls - d_log_std).max() / max(np.abs(fd_ls).max(), 1e-8) < 1e-4


# --- checkpoints -------------------------------------------------------------

def test_mlp_checkpoint_roundtrip():
    rng = np.random.default_rng(9)
    net = nn.Mlp([4, 8, 3], rng, head="categorical")
    buf = io.BytesIO()
    nn.save_mlp(buf, net)
    buf.seek(0)
    loaded = nn.load_mlp(buf)
    assert loaded.widths == net.widths
    assert loaded.head == "categorical"
    for a, b in zip(net.parameters, loaded.parameters):
        assert np.array_equal(a, b)


def test_array_checkpoint_roundtrip():
    buf = io.BytesIO()
    arr = np.array([0.1, -2.5, 3.75])
    nn.save_array(buf, arr)
    buf.seek(0)
    assert np.array_equal(nn.load_array(buf), arr)


def test_bad_magic_rejected():
    buf = io.BytesIO(b"XXXX" + b"\x00" * 20)
    with pytest.raises(ValueError):
        nn.load_mlp(buf)
