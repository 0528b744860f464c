"""Unit and property tests for the network engine.

Oracles live here, independent of the implementation: hand-evaluated
matrix arithmetic, patch enumeration by explicit loops, nested-loop
direct convolution, and central finite differences.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xbar_bench import nncore
from xbar_bench.errors import NumericFault, ShapeMismatch
from xbar_bench.nncore import (
    LayerSpec, NetworkSpec, TrainConfig, conv2d, conv2d_via_vmm, count_macs,
    dense, forward, grad_check, im2col, maxpool, relu, softmax_layer,
    train_sgd,
)


# ---------------------------------------------------------------------------
# oracles


def direct_conv(x, w, b):
    """Sliding-window convolution by explicit loops; stride 1, no padding."""
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    oh, ow = h - k + 1, wd - k + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for c in range(c_in):
                    for ki in range(k):
                        for kj in range(k):
                            acc += x[c, i + ki, j + kj] * w[o, c, ki, kj]
                out[o, i, j] = acc + b[o]
    return out


def enumerate_patches(x, k):
    """im2col by explicit enumeration: channel-major flattened patches."""
    c, h, w = x.shape
    rows = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            rows.append([x[ch, i + ki, j + kj]
                         for ch in range(c)
                         for ki in range(k)
                         for kj in range(k)])
    return np.array(rows)


def mlp(widths, rng, scale=0.5):
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        layers.append(dense(rng.normal(0, scale, (fan_out, fan_in)),
                            rng.normal(0, scale, fan_out)))
        layers.append(relu())
    layers.pop()  # no relu after the output layer
    layers.append(softmax_layer())
    return NetworkSpec([layers], [(widths[0],)])


# ---------------------------------------------------------------------------
# forward


def test_identity_dense_relu_passes_nonnegative_input_through():
    net = NetworkSpec(
        [[dense(np.eye(4), np.zeros(4)), relu(), softmax_layer()]], [(4,)])
    x = np.array([0.5, 0.0, 2.0, 1.0])
    probs = forward(net, x)
    # softmax of x itself; the dense+relu stage must be exact identity
    expect = np.exp(x - x.max()) / np.exp(x - x.max()).sum()
    np.testing.assert_allclose(probs, expect, rtol=1e-15)


def test_mlp_output_is_a_probability_vector():
    rng = np.random.default_rng(3)
    net = mlp([16, 230, 5], rng)
    p = forward(net, rng.normal(0, 1, 16))
    assert p.shape == (5,)
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0) and np.all(p <= 1)


def test_random_2_2_2_mlp_matches_hand_arithmetic():
    w1 = np.array([[0.3, -0.2], [0.5, 0.1]])
    b1 = np.array([0.1, -0.4])
    w2 = np.array([[-0.7, 0.6], [0.2, 0.9]])
    b2 = np.array([0.05, -0.05])
    net = NetworkSpec(
        [[dense(w1, b1), relu(), dense(w2, b2), softmax_layer()]], [(2,)])
    x = np.array([0.8, -0.5])
    h = np.maximum(w1 @ x + b1, 0.0)
    z = w2 @ h + b2
    expect = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    np.testing.assert_allclose(forward(net, x), expect, atol=1e-12)


def test_forward_batch_matches_per_sample():
    rng = np.random.default_rng(11)
    net = mlp([6, 9, 5], rng)
    xs = rng.normal(0, 1, (7, 6))
    batch = forward(net, xs)
    # batched BLAS kernels may differ from the matvec path in the last ulp
    for i in range(7):
        np.testing.assert_allclose(batch[i], forward(net, xs[i]), rtol=1e-12)


def test_forward_is_deterministic_across_calls():
    rng = np.random.default_rng(11)
    net = mlp([6, 9, 5], rng)
    xs = rng.normal(0, 1, (7, 6))
    np.testing.assert_array_equal(forward(net, xs), forward(net, xs))


def test_forward_rejects_wrong_shape():
    net = mlp([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros(5))


def test_forward_flags_nonfinite_activations():
    w = np.full((2, 2), 1e308)
    net = NetworkSpec([[dense(w), dense(w.copy()), softmax_layer()]], [(2,)])
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericFault):
            forward(net, np.array([1e308, 1e308]))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_sums_to_one_and_stays_in_range(vals):
    z = np.array(vals)
    p = nncore.softmax(z)
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0) and np.all(p <= 1)


# ---------------------------------------------------------------------------
# im2col / convolution


def test_im2col_k1_is_flattened_input():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = im2col(x, 1)
    assert out.shape == (4, 1)
    np.testing.assert_array_equal(out.ravel(), [1, 2, 3, 4])


def test_im2col_4x4_k3_first_row_is_top_left_patch():
    x = np.arange(16.0).reshape(1, 4, 4)
    out = im2col(x, 3)
    assert out.shape == (4, 9)
    np.testing.assert_array_equal(out[0], x[0, :3, :3].ravel())
    np.testing.assert_array_equal(out, enumerate_patches(x, 3))


def test_im2col_row_count_law():
    x = np.zeros((1, 5, 5))
    assert im2col(x, 3).shape[0] == 9


def test_im2col_rejects_oversized_kernel():
    with pytest.raises(ShapeMismatch):
        im2col(np.zeros((1, 2, 2)), 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 3), st.integers(0, 3))
def test_im2col_matches_enumeration(c, k, extra_h, extra_w):
    rng = np.random.default_rng(c * 100 + k * 10 + extra_h + extra_w)
    x = rng.normal(0, 1, (c, k + extra_h, k + extra_w))
    np.testing.assert_array_equal(im2col(x, k), enumerate_patches(x, k))


def test_conv_identity_kernel():
    x = np.random.default_rng(5).normal(0, 1, (1, 4, 4))
    layer = conv2d(np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(conv2d_via_vmm(x, layer), x)


def test_conv_all_ones_3x3_sums_to_nine():
    layer = conv2d(np.ones((1, 1, 3, 3)), np.zeros(1))
    out = conv2d_via_vmm(np.ones((1, 3, 3)), layer)
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == pytest.approx(9.0, abs=1e-12)


def test_conv_matches_direct_oracle():
    rng = np.random.default_rng(17)
    w = rng.normal(0, 1, (2, 1, 3, 3))
    b = rng.normal(0, 1, 2)
    x = rng.normal(0, 1, (1, 5, 5))
    got = conv2d_via_vmm(x, conv2d(w, b))
    np.testing.assert_allclose(got, direct_conv(x, w, b), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 3), st.data())
def test_conv_equals_direct_on_random_instances(c_in, c_out, k, extra, data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (c_in, k + extra, k + extra))
    w = rng.normal(0, 1, (c_out, c_in, k, k))
    b = rng.normal(0, 1, c_out)
    got = conv2d_via_vmm(x, conv2d(w, b))
    np.testing.assert_allclose(got, direct_conv(x, w, b), atol=1e-10)


def test_maxpool_floor_division_drops_odd_edge():
    x = np.random.default_rng(2).normal(0, 1, (3, 13, 13))
    net_layer = maxpool(2)
    out = nncore._apply_layer(net_layer, x[None])[0]
    assert out.shape == (3, 6, 6)
    # window (0,0) by hand
    assert out[0, 0, 0] == x[0, :2, :2].max()
    # the 13th row/column never contributes
    x2 = x.copy()
    x2[:, 12, :] = 1e9
    x2[:, :, 12] = 1e9
    out2 = nncore._apply_layer(net_layer, x2[None])[0]
    np.testing.assert_array_equal(out, out2)


# ---------------------------------------------------------------------------
# training


def two_blob_data(n, rng):
    """Linearly separable 2-class blobs in 2-d."""
    x0 = rng.normal([-2, 0], 0.4, (n, 2))
    x1 = rng.normal([2, 0], 0.4, (n, 2))
    xs = np.vstack([x0, x1])
    ys = np.array([0] * n + [1] * n)
    return xs, ys


def test_zero_learning_rate_is_a_no_op():
    rng = np.random.default_rng(0)
    net = mlp([2, 3, 2], rng)
    xs, ys = two_blob_data(20, rng)
    before = [l.weights.copy() for l in net.branches[0] if l.weights is not None]
    trained = train_sgd(net, ([xs], ys), TrainConfig(0.0, 3, 8, seed=1))
    after = [l.weights for l in trained.branches[0] if l.weights is not None]
    for b, a in zip(before, after):
        np.testing.assert_array_equal(b, a)


def test_separable_blobs_reach_95_percent_train_accuracy():
    rng = np.random.default_rng(42)
    xs, ys = two_blob_data(60, rng)
    net = NetworkSpec(
        [[dense(rng.normal(0, 0.1, (2, 2)), np.zeros(2)), softmax_layer()]],
        [(2,)])
    trained = train_sgd(net, ([xs], ys), TrainConfig(0.1, 50, 16, seed=7))
    preds = forward(trained, xs).argmax(axis=1)
    assert (preds == ys).mean() >= 0.95


def test_training_is_bit_reproducible():
    rng = np.random.default_rng(9)
    xs, ys = two_blob_data(30, rng)
    net = mlp([2, 5, 2], np.random.default_rng(1))
    cfg = TrainConfig(0.05, 5, 8, seed=123, dropout=0.25)
    t1 = train_sgd(net, ([xs], ys), cfg)
    t2 = train_sgd(net, ([xs], ys), cfg)
    for l1, l2 in zip(t1.branches[0], t2.branches[0]):
        if l1.weights is not None:
            np.testing.assert_array_equal(l1.weights, l2.weights)
            np.testing.assert_array_equal(l1.bias, l2.bias)


def test_training_loss_decreases_on_separable_data():
    rng = np.random.default_rng(4)
    xs, ys = two_blob_data(50, rng)
    net = mlp([2, 6, 2], rng)
    history = []
    train_sgd(net, ([xs], ys), TrainConfig(0.05, 20, 10, seed=2), history=history)
    assert history[-1] <= history[0]


def test_train_rejects_out_of_range_labels():
    rng = np.random.default_rng(0)
    net = mlp([2, 3, 2], rng)
    with pytest.raises(ShapeMismatch):
        train_sgd(net, ([np.zeros((4, 2))], np.array([0, 1, 2, 0])),
                  TrainConfig(0.1, 1, 2, seed=0))


# ---------------------------------------------------------------------------
# gradient checking


def test_grad_check_2_3_2_mlp():
    rng = np.random.default_rng(21)
    net = mlp([2, 3, 2], rng)
    x = rng.normal(0, 1, 2)
    assert grad_check(net, x, 1, eps=1e-5) < 1e-4


def test_softmax_ce_gradient_closed_form():
    # all-zero output weights make logits 0, so softmax is uniform and
    # the loss gradient wrt logits must be (softmax - onehot) / n
    w = np.zeros((3, 4))
    net = NetworkSpec([[dense(w, np.zeros(3)), softmax_layer()]], [(4,)])
    x = np.array([[1.0, -2.0, 0.5, 0.3]])
    labels = np.array([2])
    logits, caches = nncore._forward_train(
        net, [x], np.random.default_rng(0), 0.0)
    _, dlogits = nncore._ce_loss_and_grad(logits, labels)
    expect = (np.full(3, 1 / 3) - np.array([0, 0, 1.0]))
    np.testing.assert_allclose(dlogits[0], expect, atol=1e-12)


def test_grad_check_tiny_conv_layer():
    rng = np.random.default_rng(8)
    layers = [conv2d(rng.normal(0, 0.5, (1, 1, 2, 2)), rng.normal(0, 0.5, 1)),
              relu(),
              dense(rng.normal(0, 0.5, (2, 4)), np.zeros(2)),
              softmax_layer()]
    net = NetworkSpec([layers], [(1, 3, 3)])
    x = rng.normal(0, 1, (1, 3, 3))
    assert grad_check(net, x, 0, eps=1e-5) < 1e-4


def test_grad_check_fused_two_branch_net():
    rng = np.random.default_rng(13)
    b0 = [dense(rng.normal(0, 0.5, (3, 4)), np.zeros(3)), relu()]
    b1 = [dense(rng.normal(0, 0.5, (2, 5)), np.zeros(2)), relu()]
    head = [dense(rng.normal(0, 0.5, (4, 5)), np.zeros(4)), softmax_layer()]
    net = NetworkSpec([b0, b1], [(4,), (5,)], fusion_head=head)
    xs = [rng.normal(0, 1, 4), rng.normal(0, 1, 5)]
    assert grad_check(net, xs, 3, eps=1e-5) < 1e-4


def test_grad_check_with_maxpool_path():
    rng = np.random.default_rng(30)
    layers = [conv2d(rng.normal(0, 0.5, (2, 1, 2, 2)), np.zeros(2)),
              relu(), maxpool(2),
              dense(rng.normal(0, 0.5, (2, 8)), np.zeros(2)),
              softmax_layer()]
    net = NetworkSpec([layers], [(1, 5, 5)])
    x = rng.normal(0, 1, (1, 5, 5))
    assert grad_check(net, x, 1, eps=1e-5) < 1e-4


# ---------------------------------------------------------------------------
# MAC accounting


def test_count_macs_16_230_5():
    rng = np.random.default_rng(0)
    net = mlp([16, 230, 5], rng)
    assert count_macs(net) == 16 * 230 + 230 * 5 == 4830


def test_count_macs_single_dense_is_product():
    net = NetworkSpec(
        [[dense(np.zeros((7, 11))), softmax_layer()]], [(11,)])
    assert count_macs(net) == 77


def test_count_macs_conv_8c3_on_32x32():
    layers = [conv2d(np.zeros((8, 1, 3, 3))), relu(),
              dense(np.zeros((5, 8 * 30 * 30))), softmax_layer()]
    net = NetworkSpec([layers], [(1, 32, 32)])
    conv_macs = 1 * 9 * 8 * 900
    assert conv_macs == 64800
    assert count_macs(net) == conv_macs + 5 * 8 * 30 * 30


def test_count_macs_zero_for_parameter_free_layers():
    layers = [dense(np.zeros((4, 4))), relu(), softmax_layer()]
    net = NetworkSpec([layers], [(4,)])
    with_free = count_macs(net)
    net2 = NetworkSpec([[dense(np.zeros((4, 4))), softmax_layer()]], [(4,)])
    assert with_free == count_macs(net2) == 16
