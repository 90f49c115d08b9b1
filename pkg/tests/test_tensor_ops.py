import numpy as np
import pytest

from mvreid.errors import ContractError, DimensionError
from mvreid.gradcheck import check_gradients
from mvreid.ops import (add, concat_channels, conv2d, gather_rows,
                        instance_norm2d, l2_normalize, leaky_relu, reshape,
                        sum_all)
from mvreid.tensor import Tape, Tensor, backward


def t64(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


# ---------------------------------------------------------------------------
# Tensor / Tape plumbing

def test_tensor_dtype_defaults():
    assert Tensor([1.0, 2.0]).data.dtype == np.float32
    assert Tensor(np.zeros(3, dtype=np.float64)).data.dtype == np.float32
    assert Tensor(np.zeros(3), dtype=np.float64).data.dtype == np.float64
    assert Tensor(np.zeros(3, dtype=np.int64)).data.dtype == np.float32


def test_grad_buffer_matches_flag():
    a = Tensor(np.ones(4), requires_grad=True)
    assert a.grad is not None and a.grad.shape == (4,) and a.grad.dtype == a.data.dtype
    b = Tensor(np.ones(4))
    assert b.grad is None


def test_item_requires_scalar():
    assert Tensor(np.asarray(2.5)).item() == pytest.approx(2.5)
    with pytest.raises(ContractError):
        Tensor(np.ones(3)).item()


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = add(x, x)
    with pytest.raises(ContractError):
        backward(y, tape)


def test_fanout_accumulates():
    # x used twice: d(sum(x + x))/dx = 2
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        y = sum_all(add(x, x))
    backward(y, tape)
    assert np.array_equal(x.grad, np.full((2, 3), 2.0, dtype=np.float32))


def test_ops_outside_tape_do_not_track():
    x = Tensor(np.ones(3), requires_grad=True)
    y = add(x, x)
    assert not y.requires_grad


# ---------------------------------------------------------------------------
# conv2d against a direct sliding-window implementation

def conv2d_loops(x, w, b, stride, padding):
    N, C, H, W = x.shape
    O, _, K, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    OH = (H + 2 * padding - K) // stride + 1
    OW = (W + 2 * padding - K) // stride + 1
    out = np.zeros((N, O, OH, OW), x.dtype)
    for n in range(N):
        for o in range(O):
            for i in range(OH):
                for j in range(OW):
                    patch = xp[n, :, i * stride:i * stride + K, j * stride:j * stride + K]
                    out[n, o, i, j] = (patch * w[o]).sum() + b[o]
    return out


@pytest.mark.parametrize("stride,padding,H,W", [
    (1, 0, 6, 6), (1, 1, 5, 7), (2, 1, 8, 8), (2, 1, 7, 5), (3, 2, 9, 9),
])
def test_conv2d_matches_direct_convolution(stride, padding, H, W):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, H, W))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    got = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64),
                 Tensor(b, dtype=np.float64), stride=stride, padding=padding)
    want = conv2d_loops(x, w, b, stride, padding)
    assert got.shape == want.shape
    np.testing.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)


def test_conv2d_output_size_floor():
    # floor((H + 2p - K)/s) + 1: 7x7, K=3, s=2, p=0 -> 3x3
    x = Tensor(np.zeros((1, 1, 7, 7)))
    w = Tensor(np.zeros((1, 1, 3, 3)))
    b = Tensor(np.zeros(1))
    assert conv2d(x, w, b, stride=2).shape == (1, 1, 3, 3)


def test_conv2d_gradients():
    rng = np.random.default_rng(11)
    x = t64(rng, 2, 2, 5, 4)
    w = t64(rng, 3, 2, 3, 3)
    b = t64(rng, 3)
    check_gradients(lambda: sum_all(conv2d(x, w, b, stride=2, padding=1)), [x, w, b])


def test_conv2d_contract_errors():
    x = Tensor(np.zeros((1, 3, 8, 8)))
    w = Tensor(np.zeros((4, 2, 3, 3)))  # channel mismatch
    b = Tensor(np.zeros(4))
    with pytest.raises(DimensionError) as e:
        conv2d(x, w, b)
    assert "(1, 3, 8, 8)" in str(e.value) and "(4, 2, 3, 3)" in str(e.value)
    with pytest.raises(ContractError):
        conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), b, stride=0)
    with pytest.raises(ContractError):
        conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), b, padding=-1)


# ---------------------------------------------------------------------------
# instance norm

def test_instance_norm_plane_statistics():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4, 5))
    out = instance_norm2d(Tensor(x, dtype=np.float64),
                          Tensor(np.ones(3), dtype=np.float64),
                          Tensor(np.zeros(3), dtype=np.float64))
    # each (n, c) plane is standardized with population variance
    np.testing.assert_allclose(out.data.mean(axis=(2, 3)), 0, atol=1e-12)
    np.testing.assert_allclose(out.data.var(axis=(2, 3)), 1, atol=1e-4)
    want = (x - x.mean(axis=(2, 3), keepdims=True)) / np.sqrt(
        x.var(axis=(2, 3), keepdims=True) + 1e-5)
    np.testing.assert_allclose(out.data, want, rtol=1e-12)


def test_instance_norm_affine_applied():
    x = np.ones((1, 2, 2, 2))
    x[0, :, 0, 0] = 3.0
    out = instance_norm2d(Tensor(x), Tensor([2.0, 0.5]), Tensor([1.0, -1.0]))
    xhat = (x - x.mean(axis=(2, 3), keepdims=True)) / np.sqrt(
        x.var(axis=(2, 3), keepdims=True) + 1e-5)
    want = xhat * np.array([2.0, 0.5])[None, :, None, None] + \
        np.array([1.0, -1.0])[None, :, None, None]
    np.testing.assert_allclose(out.data, want.astype(np.float32), rtol=1e-6)


def test_instance_norm_gradients():
    rng = np.random.default_rng(5)
    x = t64(rng, 2, 3, 4, 4)
    g = Tensor(rng.standard_normal(3) + 1.0, requires_grad=True, dtype=np.float64)
    b = t64(rng, 3)
    w = Tensor(rng.standard_normal((2, 3, 4, 4)), dtype=np.float64)

    def f():
        # weight the output so the gradient is not just the trivial sum
        return sum_all(mul_fixed(instance_norm2d(x, g, b), w))

    check_gradients(f, [x, g, b])


def test_instance_norm_eps_contract():
    x = Tensor(np.zeros((1, 1, 2, 2)))
    with pytest.raises(ContractError):
        instance_norm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), eps=0.0)


# ---------------------------------------------------------------------------
# the small ops

def test_leaky_relu_values_and_grad():
    x = Tensor(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]), requires_grad=True, dtype=np.float64)
    out = leaky_relu(x, slope=0.2)
    np.testing.assert_allclose(out.data, [-0.4, -0.1, 0.0, 0.5, 2.0])
    # finite differences straddle the kink at 0, so check away from it
    y = Tensor(np.array([-2.0, -0.5, 0.4, 2.0]), requires_grad=True, dtype=np.float64)
    check_gradients(lambda: sum_all(leaky_relu(y, slope=0.2)), [y])
    with pytest.raises(ContractError):
        leaky_relu(x, slope=1.0)


def test_l2_normalize_rows():
    rng = np.random.default_rng(9)
    v = rng.standard_normal((6, 8))
    out = l2_normalize(Tensor(v, dtype=np.float64))
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-9)
    flat = l2_normalize(Tensor(v[0], dtype=np.float64))
    np.testing.assert_allclose(flat.data, out.data[0])


def mul_fixed(x, w):
    # test-local helper: differentiable multiply by a constant tensor, so a
    # plain sum does not wash out direction-dependent gradient terms
    out = Tensor(x.data * w.data, requires_grad=x.requires_grad, dtype=x.data.dtype)
    from mvreid.tensor import active_tape
    tape = active_tape()
    if tape is not None and x.requires_grad:
        tape.record(out, lambda grad: x.grad.__iadd__(grad * w.data))
    return out


def test_l2_normalize_gradients():
    rng = np.random.default_rng(13)
    v = t64(rng, 4, 6)
    w = Tensor(rng.standard_normal((4, 6)), dtype=np.float64)
    check_gradients(lambda: sum_all(mul_fixed(l2_normalize(v), w)), [v])


def test_concat_channels_and_grad():
    rng = np.random.default_rng(17)
    a = t64(rng, 2, 3, 4, 4)
    b = t64(rng, 2, 2, 4, 4)
    out = concat_channels(a, b)
    assert out.shape == (2, 5, 4, 4)
    np.testing.assert_array_equal(out.data[:, :3], a.data)
    np.testing.assert_array_equal(out.data[:, 3:], b.data)
    w = Tensor(np.random.default_rng(0).standard_normal((2, 5, 4, 4)), dtype=np.float64)
    check_gradients(lambda: sum_all(mul_fixed(concat_channels(a, b), w)), [a, b])
    with pytest.raises(DimensionError):
        concat_channels(a, t64(rng, 2, 2, 5, 4))


def test_gather_rows_accumulates_duplicates():
    x = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        y = sum_all(gather_rows(x, [1, 1, 3]))
    backward(y, tape)
    want = np.zeros((4, 3))
    want[1] = 2.0
    want[3] = 1.0
    np.testing.assert_array_equal(x.grad, want)
    with pytest.raises(ContractError):
        gather_rows(x, [4])
    with pytest.raises(ContractError):
        gather_rows(x, [])


def test_reshape_roundtrip_grad():
    rng = np.random.default_rng(23)
    x = t64(rng, 3, 4)
    w = Tensor(rng.standard_normal(12), dtype=np.float64)
    check_gradients(lambda: sum_all(mul_fixed(reshape(x, (12,)), w)), [x])


# ---------------------------------------------------------------------------
# dtype shadowing: the same graph in float32 and float64

def test_float32_pipeline_stays_float32():
    rng = np.random.default_rng(29)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.1, requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    g = Tensor(np.ones(3), requires_grad=True)
    be = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        h = conv2d(x, w, b, stride=2, padding=1)
        h = instance_norm2d(h, g, be)
        h = leaky_relu(h)
        loss = sum_all(h)
    assert loss.data.dtype == np.float32
    backward(loss, tape)
    for p in (x, w, b, g, be):
        assert p.grad.dtype == np.float32


def test_float64_shadow_through_same_code():
    rng = np.random.default_rng(31)
    x = t64(rng, 1, 2, 6, 6)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.1, requires_grad=True, dtype=np.float64)
    b = t64(rng, 3)
    g = Tensor(np.ones(3), requires_grad=True, dtype=np.float64)
    be = t64(rng, 3)

    def f():
        h = conv2d(x, w, b, stride=2, padding=1)
        h = instance_norm2d(h, g, be)
        h = leaky_relu(h)
        return sum_all(h)

    worst = check_gradients(f, [x, w, b, g, be])
    assert worst < 1e-3
