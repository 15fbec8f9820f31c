import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgalign import numerics as nx
from kgalign.numerics import Tensor, grad_check, lr_schedule


def test_quadratic_grad_exact():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * x).sum()
    y.backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])
    assert grad_check(lambda t: (t * t).sum(), Tensor([1.0, 2.0])) < 1e-8


def test_softmax_cross_entropy_gradcheck():
    rng = np.random.default_rng(0)
    logits = Tensor(rng.normal(size=(3, 4)))
    labels = np.array([0, 3, 1])
    assert grad_check(lambda z: nx.cross_entropy(z, labels), logits, eps=1e-5) < 1e-4


def test_gelu_gradcheck():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=7))
    assert grad_check(lambda t: (nx.gelu(t) * np.arange(7.0)).sum(), x) < 1e-4


def test_gelu_matches_tanh_formula():
    x = np.linspace(-3, 3, 13)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(nx.gelu(Tensor(x)).data, ref, rtol=0, atol=1e-15)


def test_cross_entropy_uniform_is_log_classes():
    assert nx.cross_entropy(Tensor(np.zeros((5, 2))), np.zeros(5, int)).item() == pytest.approx(np.log(2), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_softmax_rows(seed):
    x = np.random.default_rng(seed).normal(scale=5, size=(4, 6))
    p = nx.softmax(Tensor(x)).data
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)


def test_masked_softmax_ignores_invalid():
    x = Tensor([[1.0, 2.0, 100.0]])
    p = nx.softmax(x, mask=np.array([[True, True, False]])).data
    assert p[0, 2] == 0.0
    np.testing.assert_allclose(p[0, :2], np.exp([1, 2]) / np.exp([1, 2]).sum())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_layer_norm_stats(seed):
    x = np.random.default_rng(seed).normal(loc=3, scale=4, size=(5, 8))
    y = nx.layer_norm(Tensor(x), eps=0.0).data
    assert np.all(np.abs(y.mean(axis=-1)) < 1e-9)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-6)


def test_segment_softmax_matches_per_group():
    s = np.array([0.3, -1.0, 2.0, 0.5, 0.1])
    seg = np.array([0, 1, 0, 1, 2])
    out = nx.segment_softmax(Tensor(s), seg, 3).data
    for g in range(3):
        idx = seg == g
        np.testing.assert_allclose(out[idx], np.exp(s[idx]) / np.exp(s[idx]).sum())


def test_batched_matmul_broadcast_grad():
    rng = np.random.default_rng(3)
    a = Tensor(rng.normal(size=(2, 3, 4)))
    b = Tensor(rng.normal(size=(4, 5)))
    w = rng.normal(size=(2, 3, 5))
    assert grad_check(lambda t: (nx.matmul(t, b) * w).sum(), a) < 1e-6
    assert grad_check(lambda t: (nx.matmul(a, t) * w).sum(), b) < 1e-6


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with nx.no_grad():
        y = x * 3.0
    assert not y.requires_grad


def test_gradcheck_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        grad_check(lambda t: nx.log(t).sum(), Tensor([-1.0]))


# -- Adam ---------------------------------------------------------------
def _group(val):
    return nx.ParamGroup({"w": Tensor(np.array(val, dtype=float))})


def test_adam_zero_grad_leaves_params():
    g = _group([1.0, -2.0])
    nx.adam_step(g, {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(g["w"].data, [1.0, -2.0])
    np.testing.assert_array_equal(g.m["w"], 0.0)
    np.testing.assert_array_equal(g.v["w"], 0.0)
    assert g.step == 1


def test_adam_first_step_closed_form():
    # m_hat = g, v_hat = g^2 after bias correction -> step = lr * g / (|g| + eps)
    g = _group([0.0])
    nx.adam_step(g, {"w": np.array([1.0])}, lr=0.1, beta1=0.9, beta2=0.999)
    assert g["w"].data[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_adam_shrinks_quadratic():
    g = _group([1.0])
    xs = [1.0]
    for _ in range(10):
        x = g["w"]
        x.grad = None
        (x * x).sum().backward()
        nx.adam_step(g, g.grads(), lr=0.1)
        xs.append(abs(g["w"].data[0]))
    assert all(b < a for a, b in zip(xs, xs[1:]))


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        nx.adam_step(_group([1.0, 2.0]), {"w": np.zeros(3)}, lr=0.1)


@pytest.mark.parametrize("epoch,expected", [(0, 5e-4), (3, 5e-5), (7, 5e-6), (2, 5e-4)])
def test_lr_schedule(epoch, expected):
    assert lr_schedule(5e-4, epoch) == pytest.approx(expected, rel=1e-12)


def test_checkpoint_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a.w": rng.normal(size=(3, 2)), "b.v": rng.normal(size=4)}
    nx.save_arrays(tmp_path / "c.json", arrays)
    back = nx.load_arrays(tmp_path / "c.json")
    for k in arrays:
        assert back[k].tobytes() == arrays[k].tobytes()
    nx.save_arrays(tmp_path / "c32.json", arrays, dtype="<f4")
    back32 = nx.load_arrays(tmp_path / "c32.json")
    np.testing.assert_allclose(back32["a.w"], arrays["a.w"], rtol=1e-6)
