import numpy as np
import pytest

from signbench import nn
from oracles import (
    away_from_zero,
    conv2d_naive,
    dense_naive,
    finite_difference,
    maxpool_naive,
    rel_error,
    spread_windows,
)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def test_conv_ones_2x2_against_bruteforce():
    x = np.ones((1, 1, 2, 2))
    w = np.ones((1, 1, 3, 3))
    b = np.zeros(1)
    out = nn.conv2d_forward(x, w, b)
    expected = conv2d_naive(x, w, b)
    np.testing.assert_array_equal(out, expected)
    # every 3x3 window centered on a 2x2 image covers all four ones
    np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 4.0))


def test_conv_delta_kernel_is_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 6, 5))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out = nn.conv2d_forward(x, w, np.zeros(3))
    np.testing.assert_allclose(out, x, rtol=0, atol=1e-15)


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 5, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    np.testing.assert_allclose(
        nn.conv2d_forward(x, w, b), conv2d_naive(x, w, b), atol=1e-12
    )


def test_conv_shape_errors_name_dims():
    x = np.ones((1, 2, 4, 4))
    w = np.ones((3, 5, 3, 3))
    with pytest.raises(nn.ShapeError, match="Cin=2.*Cin=5"):
        nn.conv2d_forward(x, w, np.zeros(3))
    with pytest.raises(nn.ShapeError, match="3x3"):
        nn.conv2d_forward(x, np.ones((3, 2, 5, 5)), np.zeros(3))
    with pytest.raises(nn.ShapeError, match="bias"):
        nn.conv2d_forward(x, np.ones((3, 2, 3, 3)), np.zeros(4))


def test_conv_rejects_nonfinite():
    x = np.ones((1, 1, 2, 2))
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(nn.NonFiniteError):
        nn.conv2d_forward(x, np.ones((1, 1, 3, 3)), np.zeros(1))


def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 2, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3))
    gx, gw, gb = nn.conv2d_backward(x, w, np.zeros((1, 3, 4, 4)))
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_delta_kernel_passes_upstream():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 2, 4, 4))
    w = np.zeros((2, 2, 3, 3))
    for c in range(2):
        w[c, c, 1, 1] = 1.0
    up = rng.normal(size=(2, 2, 4, 4))
    gx, _, _ = nn.conv2d_backward(x, w, up)
    np.testing.assert_allclose(gx, up, atol=1e-15)


def test_conv_backward_finite_difference():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 2, 4, 3))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    r = rng.normal(size=(2, 3, 4, 3))  # fixed projection makes the loss scalar

    def loss():
        return float((nn.conv2d_forward(x, w, b) * r).sum())

    gx, gw, gb = nn.conv2d_backward(x, w, r)
    assert rel_error(gx, finite_difference(loss, x)) < 1e-5
    assert rel_error(gw, finite_difference(loss, w)) < 1e-5
    assert rel_error(gb, finite_difference(loss, b)) < 1e-5


# ---------------------------------------------------------------------------
# maxpool
# ---------------------------------------------------------------------------

def test_maxpool_single_window():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out, idx = nn.maxpool_forward(x)
    assert out[0, 0, 0, 0] == 4.0
    assert idx[0, 0, 0, 0] == 3  # row-major offset of position (1,1)


def test_maxpool_constant_ties_first_index():
    x = np.full((1, 2, 4, 4), 7.0)
    out, idx = nn.maxpool_forward(x)
    np.testing.assert_array_equal(out, np.full((1, 2, 2, 2), 7.0))
    assert (idx == 0).all()


def test_maxpool_matches_window_scan():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 1, 6, 6))
    out, idx = nn.maxpool_forward(x)
    exp_out, exp_idx = maxpool_naive(x)
    np.testing.assert_array_equal(out, exp_out)
    np.testing.assert_array_equal(idx, exp_idx)


def test_maxpool_rejects_odd_dims():
    with pytest.raises(nn.ShapeError, match="even"):
        nn.maxpool_forward(np.zeros((1, 1, 5, 4)))


def test_maxpool_backward_finite_difference():
    rng = np.random.default_rng(6)
    x = spread_windows(rng.normal(size=(2, 2, 4, 4)))
    r = rng.normal(size=(2, 2, 2, 2))

    def loss():
        out, _ = nn.maxpool_forward(x)
        return float((out * r).sum())

    _, idx = nn.maxpool_forward(x)
    gx = nn.maxpool_backward(idx, r, x.shape)
    assert rel_error(gx, finite_difference(loss, x)) < 1e-5


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def test_dense_identity_weights():
    x = np.random.default_rng(7).normal(size=(3, 4))
    out = nn.dense_forward(x, np.eye(4), np.zeros(4))
    np.testing.assert_allclose(out, x, atol=1e-15)


def test_dense_zero_weights_gives_bias_rows():
    b = np.array([1.0, -2.0, 0.5])
    out = nn.dense_forward(np.ones((4, 5)), np.zeros((5, 3)), b)
    np.testing.assert_array_equal(out, np.tile(b, (4, 1)))


def test_dense_matches_naive_loops():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 6))
    w = rng.normal(size=(6, 4))
    b = rng.normal(size=4)
    np.testing.assert_allclose(nn.dense_forward(x, w, b), dense_naive(x, w, b), atol=1e-12)


def test_dense_backward_finite_difference():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(5, 4))
    b = rng.normal(size=4)
    r = rng.normal(size=(3, 4))

    def loss():
        return float((nn.dense_forward(x, w, b) * r).sum())

    gx, gw, gb = nn.dense_backward(x, w, r)
    assert rel_error(gx, finite_difference(loss, x)) < 1e-5
    assert rel_error(gw, finite_difference(loss, w)) < 1e-5


def test_dense_shape_error():
    with pytest.raises(nn.ShapeError, match="K=3.*K=4"):
        nn.dense_forward(np.zeros((2, 3)), np.zeros((4, 5)), np.zeros(5))


# ---------------------------------------------------------------------------
# softmax cross-entropy
# ---------------------------------------------------------------------------

def test_cross_entropy_uniform_logits():
    logits = np.zeros((5, 4))
    loss, _ = nn.softmax_cross_entropy(logits, np.array([0, 1, 2, 3, 0]))
    assert loss == pytest.approx(np.log(4.0), abs=1e-12)


def test_cross_entropy_saturates_to_zero():
    logits = np.zeros((1, 4))
    logits[0, 2] = 20.0
    loss, _ = nn.softmax_cross_entropy(logits, np.array([2]))
    assert 0.0 <= loss < 1e-3


def test_cross_entropy_grad_rows_sum_zero_and_loss_nonneg():
    rng = np.random.default_rng(10)
    logits = rng.normal(size=(6, 4)) * 3
    labels = rng.integers(0, 4, size=6)
    loss, grad = nn.softmax_cross_entropy(logits, labels)
    assert loss >= 0.0
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_cross_entropy_grad_finite_difference():
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(3, 4))
    labels = np.array([1, 0, 3])

    def loss():
        return nn.softmax_cross_entropy(logits, labels)[0]

    _, grad = nn.softmax_cross_entropy(logits, labels)
    assert rel_error(grad, finite_difference(loss, logits)) < 1e-5


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError, match="labels"):
        nn.softmax_cross_entropy(np.zeros((2, 4)), np.array([0, 4]))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(12)
    p = nn.softmax(rng.normal(size=(50, 4)) * 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------------------
# sgd
# ---------------------------------------------------------------------------

def _one_param(value):
    return nn.NetworkParams({"w": np.array([value])})


def test_sgd_arithmetic():
    p = nn.sgd_step(_one_param(1.0), {"w": np.array([0.5])}, lr=0.1)
    assert p.tensors["w"][0] == pytest.approx(0.95)


def test_sgd_zero_grad_no_change():
    p = nn.sgd_step(_one_param(3.0), {"w": np.array([0.0])}, lr=0.5)
    assert p.tensors["w"][0] == 3.0


def test_sgd_two_steps_equal_one_summed():
    g = {"w": np.array([0.25])}
    p1 = _one_param(1.0)
    nn.sgd_step(p1, g, lr=0.1)
    nn.sgd_step(p1, g, lr=0.1)
    p2 = nn.sgd_step(_one_param(1.0), g, lr=0.2)
    assert p1.tensors["w"][0] == pytest.approx(p2.tensors["w"][0])


def test_sgd_rejects_nonfinite_grad_and_bad_lr():
    with pytest.raises(nn.NonFiniteError):
        nn.sgd_step(_one_param(1.0), {"w": np.array([np.inf])}, lr=0.1)
    with pytest.raises(ValueError):
        nn.sgd_step(_one_param(1.0), {"w": np.array([0.0])}, lr=0.0)


# ---------------------------------------------------------------------------
# network-level behaviour
# ---------------------------------------------------------------------------

SMALL_SPEC = nn.NetworkSpec(height=16, width=16, conv_channels=(4, 6, 8), dense_widths=(16, 8))


def test_spec_validates_divisibility():
    with pytest.raises(nn.ShapeError, match="divisible"):
        nn.NetworkSpec(height=20, width=20)


def test_forward_deterministic_float64():
    params = nn.init_params(SMALL_SPEC, seed=1, dtype=np.float64)
    x = np.random.default_rng(13).uniform(size=(2, 3, 16, 16))
    a, _ = nn.forward(SMALL_SPEC, params, x)
    b, _ = nn.forward(SMALL_SPEC, params, x)
    assert (a == b).all()


def test_init_params_reproducible_and_shaped():
    p1 = nn.init_params(SMALL_SPEC, seed=5)
    p2 = nn.init_params(SMALL_SPEC, seed=5)
    for k in p1.tensors:
        np.testing.assert_array_equal(p1.tensors[k], p2.tensors[k])
    nn.check_params(SMALL_SPEC, p1)
    assert nn.init_params(SMALL_SPEC, seed=6).tensors["conv1.w"].flat[0] != p1.tensors["conv1.w"].flat[0]


def test_predict_example_logit_vector():
    # direct softmax evaluation of [0.1, 2.0, 0.3, 0.2]
    probs = nn.softmax(np.array([0.1, 2.0, 0.3, 0.2]))
    assert probs.argmax() == 1
    assert probs[1] == pytest.approx(0.668, abs=5e-4)


def test_predict_runs_on_network_and_ties_break_low():
    params = nn.init_params(SMALL_SPEC, seed=2, dtype=np.float64)
    # zero the output layer so all logits tie
    params.tensors["out.w"][:] = 0
    params.tensors["out.b"][:] = 0
    img = np.random.default_rng(14).uniform(size=(3, 16, 16))
    cls, conf = nn.predict(SMALL_SPEC, params, img)
    assert cls == 0
    assert conf == pytest.approx(0.25)


def test_predict_invariant_to_logit_shift():
    rng = np.random.default_rng(15)
    logits = rng.normal(size=4)
    p1 = nn.softmax(logits)
    p2 = nn.softmax(logits + 123.4)
    assert p1.argmax() == p2.argmax()
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_predict_rejects_wrong_shape():
    params = nn.init_params(SMALL_SPEC, seed=3)
    with pytest.raises(nn.ShapeError):
        nn.predict(SMALL_SPEC, params, np.zeros((1, 8, 8)))


def test_network_memorizes_two_samples():
    spec = SMALL_SPEC
    params = nn.init_params(spec, seed=7, dtype=np.float64)
    rng = np.random.default_rng(16)
    x = rng.uniform(size=(2, 3, 16, 16))
    labels = np.array([0, 3])
    loss = np.inf
    for step in range(500):
        loss, _, grads = nn.loss_and_grads(spec, params, x, labels)
        if loss < 0.01:
            break
        nn.sgd_step(params, grads, lr=0.05)
    assert loss < 0.01, f"loss stuck at {loss}"


def test_full_network_gradient_finite_difference():
    spec = nn.NetworkSpec(height=8, width=8, conv_channels=(2, 3, 4), dense_widths=(8, 6))
    params = nn.init_params(spec, seed=8, dtype=np.float64)
    rng = np.random.default_rng(17)
    x = away_from_zero(rng.uniform(0.1, 0.9, size=(2, 3, 8, 8)))
    labels = np.array([1, 2])
    _, _, grads = nn.loss_and_grads(spec, params, x, labels)
    for key in ("conv1.w", "conv3.b", "fc1.w", "out.w", "out.b"):
        arr = params.tensors[key]

        def loss():
            logits, _ = nn.forward(spec, params, x)
            return nn.softmax_cross_entropy(logits, labels)[0]

        assert rel_error(grads[key], finite_difference(loss, arr)) < 1e-5, key


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    params = nn.init_params(SMALL_SPEC, seed=21, dtype=np.float64)
    path = tmp_path / "model.bin"
    nn.save_checkpoint(path, params)
    loaded = nn.load_checkpoint(path)
    assert list(loaded.tensors) == list(params.tensors)
    for k in params.tensors:
        np.testing.assert_array_equal(loaded.tensors[k], params.tensors[k])
    with open(path, "rb") as fh:
        assert fh.read(5) == b"SBNN1"


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE!rest")
    with pytest.raises(ValueError, match="magic"):
        nn.load_checkpoint(path)
