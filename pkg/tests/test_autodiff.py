import numpy as np
import pytest

from trajkit import autodiff as ad
from trajkit.autodiff import Tensor


def numeric_grad(f, x, eps=1e-6):
    """Central finite differences of a scalar-valued f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def check_grads(build, shapes, seed, atol=1e-4, rtol=1e-4):
    """Compare autodiff grads of a scalar graph against finite differences.

    build takes one Tensor per shape and returns a scalar Tensor.
    """
    rng = np.random.default_rng(seed)
    values = [rng.normal(size=s) if s else rng.normal() for s in shapes]
    tensors = [Tensor(v) for v in values]
    out = build(*tensors)
    assert np.ndim(out.data) == 0
    out.backward()
    for i, t in enumerate(tensors):
        def f(x, i=i):
            args = [Tensor(v.copy() if hasattr(v, "copy") else v) for v in values]
            args[i] = Tensor(x)
            return float(build(*args).data)
        want = numeric_grad(f, np.asarray(values[i], dtype=np.float64))
        got = t.grad if t.grad is not None else np.zeros_like(want)
        np.testing.assert_allclose(got, want, atol=atol, rtol=rtol)


def test_add_mul_sub_div_broadcast():
    check_grads(lambda a, b: ((a + b) * a - b / (a * a + 2.0)).sum(),
                [(3, 4), (4,)], seed=0)
    check_grads(lambda a, b: (a - b).sum(), [(2, 1, 3), (4, 1)], seed=1)


def test_scalar_and_reflected_ops():
    check_grads(lambda a: (2.0 * a + a * 3.0 - 1.0 / a + (-a) + (5.0 - a)).sum(),
                [(5,)], seed=2)


def test_pow():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 2.0, size=(4,))
    t = Tensor(x)
    out = (t**3).sum()
    out.backward()
    np.testing.assert_allclose(t.grad, 3.0 * x**2, rtol=1e-12)


def test_matmul_2d():
    check_grads(lambda a, b: (a @ b).sum(), [(3, 4), (4, 5)], seed=4)


def test_matmul_vec_cases():
    check_grads(lambda a, b: (a @ b).sum(), [(4,), (4, 3)], seed=5)
    check_grads(lambda a, b: (a @ b).sum(), [(3, 4), (4,)], seed=6)
    check_grads(lambda a, b: (a @ b), [(4,), (4,)], seed=7)


def test_matmul_batched():
    check_grads(lambda a, b: (a @ b).sum(), [(2, 3, 4), (4, 5)], seed=8)
    check_grads(lambda a, b: (a @ b).sum(), [(2, 3, 4), (2, 4, 5)], seed=9)
    check_grads(lambda a, b: (a @ b).sum(), [(3, 4), (2, 4, 5)], seed=10)


def test_unary_functions():
    check_grads(lambda a: ad.exp(a).sum(), [(3, 2)], seed=11)
    check_grads(lambda a: ad.expm1(a).sum(), [(3, 2)], seed=12)
    check_grads(lambda a: ad.tanh(a).sum(), [(5,)], seed=13)
    check_grads(lambda a: ad.sigmoid(a * 3.0).sum(), [(5,)], seed=14)
    check_grads(lambda a: ad.softplus(a * 4.0).sum(), [(5,)], seed=15)
    check_grads(lambda a: ad.relu(a).sum(), [(7,)], seed=16)
    check_grads(lambda a: ad.leaky_relu(a, 0.2).sum(), [(7,)], seed=17)
    rng = np.random.default_rng(18)
    x = rng.uniform(0.5, 3.0, size=(4,))
    t = Tensor(x)
    ad.log(t).sum().backward()
    np.testing.assert_allclose(t.grad, 1.0 / x, rtol=1e-12)


def test_softplus_sigmoid_stable_at_extremes():
    big = np.array([-800.0, -40.0, 0.0, 40.0, 800.0])
    sp = ad.softplus(big)
    assert np.all(np.isfinite(sp))
    np.testing.assert_allclose(sp[-1], 800.0)
    np.testing.assert_allclose(sp[0], 0.0, atol=1e-300)
    sg = ad.sigmoid(big)
    assert np.all(np.isfinite(sg))
    assert sg[0] >= 0.0 and sg[-1] <= 1.0


def test_sum_mean_axes():
    check_grads(lambda a: a.sum(axis=0).mean(), [(3, 4)], seed=19)
    check_grads(lambda a: a.mean(axis=1, keepdims=True).sum(), [(3, 4)], seed=20)
    check_grads(lambda a: a.sum(axis=(0, 2)).sum(), [(2, 3, 4)], seed=21)


def test_reshape_and_getitem():
    check_grads(lambda a: a.reshape(6).sum(), [(2, 3)], seed=22)
    check_grads(lambda a: (a[1] * a[0]).sum(), [(3, 4)], seed=23)
    check_grads(lambda a: a[:, 1:3].sum(), [(3, 4)], seed=24)
    check_grads(lambda a: a[..., :2].sum(), [(2, 3, 4)], seed=25)


def test_getitem_repeated_index_accumulates():
    x = Tensor(np.array([1.0, 2.0, 3.0]))
    idx = np.array([0, 0, 2])
    out = x[idx].sum()
    out.backward()
    np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])


def test_where_concat_stack():
    rng = np.random.default_rng(26)
    cond = rng.normal(size=(3, 4)) > 0
    check_grads(lambda a, b: ad.where(cond, a, b).sum(), [(3, 4), (3, 4)], seed=27)
    check_grads(lambda a, b: ad.concat([a, b], axis=1).mean(), [(3, 2), (3, 4)], seed=28)
    check_grads(lambda a, b: ad.stack([a, b], axis=0).mean(), [(3, 2), (3, 2)], seed=29)
    check_grads(lambda a, b: ad.stack([a, b], axis=-2).sum(), [(3, 2), (3, 2)], seed=30)


def test_grad_accumulates_on_reuse():
    x = Tensor(np.array([1.5, -0.5]))
    y = x * x + x * 3.0
    y.sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 3.0)


def test_plain_numpy_passthrough():
    a = np.ones((2, 2))
    assert isinstance(ad.exp(a), np.ndarray)
    assert isinstance(ad.concat([a, a], axis=0), np.ndarray)
    assert isinstance(ad.where(a > 0, a, 0.0 * a), np.ndarray)


def test_float64_everywhere():
    t = Tensor(np.array([1, 2, 3]))
    assert t.data.dtype == np.float64
    out = ad.tanh(t * 2)
    assert out.data.dtype == np.float64


def test_backward_requires_scalar():
    t = Tensor(np.ones(3))
    with pytest.raises(ValueError):
        t.backward()


def test_composite_chain_matches_fd():
    def build(w1, b1, w2, b2, x):
        h = ad.tanh(x @ w1 + b1)
        y = ad.sigmoid(h @ w2 + b2)
        return (y * y).mean()

    check_grads(build, [(3, 4), (4,), (4, 2), (2,), (5, 3)], seed=31)
