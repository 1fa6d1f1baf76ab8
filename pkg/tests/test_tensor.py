import math

import numpy as np
import pytest

from tiprdc import tensor as T
from tiprdc.tensor import GradientError, ShapeError, Tensor, grad_check


def test_softplus_values():
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-12)
    assert T.softplus(Tensor(50.0)).item() == pytest.approx(50.0, abs=1e-9)


def test_softplus_finite_over_wide_range():
    x = Tensor(np.linspace(-1e4, 1e4, 2001), requires_grad=True)
    y = T.softplus(x)
    assert np.all(np.isfinite(y.data))
    T.backward(T.sum(y))
    assert np.all(np.isfinite(x.grad))


def test_concat_shape():
    a, b = Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 5)))
    assert T.concat([a, b], axis=1).shape == (2, 8)


@pytest.mark.parametrize(
    "op, a, b",
    [
        (T.matmul, (2, 3), (4, 5)),
        (T.add, (2, 3), (3, 2)),
        (T.mul, (2,), (3,)),
        (T.bias_add, (2, 3), (2,)),
    ],
)
def test_shape_errors_name_op_and_shapes(op, a, b):
    with pytest.raises(ShapeError) as exc:
        op(Tensor(np.ones(a)), Tensor(np.ones(b)))
    msg = str(exc.value)
    assert op.__name__ in msg and str(a) in msg and str(b) in msg


def test_concat_shape_error():
    with pytest.raises(ShapeError, match="concat"):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_scalar_broadcast_allowed():
    x = Tensor(np.arange(3.0), requires_grad=True)
    s = Tensor(2.0, requires_grad=True)
    T.backward(T.sum(T.mul(x, s)))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0, 2.0])
    assert s.grad == pytest.approx(3.0)


def test_backward_square():
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    T.backward(T.sum(w * w))
    np.testing.assert_array_equal(w.grad, [2.0, 4.0, 6.0])


def test_backward_softplus_at_zero():
    w = Tensor(0.0, requires_grad=True)
    T.backward(T.softplus(w))
    assert w.grad == pytest.approx(0.5)


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(GradientError):
        T.backward(w * w)


def test_backward_accumulates_without_zero_grad():
    w = Tensor([1.0, -2.0], requires_grad=True)
    loss = T.sum(w * w)
    T.backward(loss)
    T.backward(loss)
    np.testing.assert_array_equal(w.grad, [4.0, -8.0])


def test_diamond_graph_accumulates_both_branches():
    # y = exp(a) * a + 3a, with a = 2x; dy/dx = 2 * (exp(a) * (1 + a) + 3)
    x = Tensor(0.7, requires_grad=True)
    a = x * 2.0
    y = T.exp(a) * a + a * 3.0
    T.backward(y)
    av = 1.4
    assert x.grad == pytest.approx(2 * (math.exp(av) * (1 + av) + 3), rel=1e-12)


def test_every_reachable_tensor_gets_grad():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    h = T.relu(x * 3.0)
    loss = T.mean(h)
    T.backward(loss)
    for t in (x, h, loss):
        assert t.grad is not None and t.grad.shape == t.shape


def test_no_graph_without_grad():
    y = T.exp(Tensor([1.0]))
    assert not y.requires_grad and y._parents == ()


def test_detach_cuts_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * 2.0).detach()
    assert not y.requires_grad
    z = T.sum(y * x)
    T.backward(z)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_grad_check_square():
    rep = grad_check(lambda x: x * x, 3.0)
    assert rep.analytic == pytest.approx(6.0)
    assert rep.numeric == pytest.approx(6.0, abs=1e-6)
    assert rep.passed


def test_grad_check_flags_relu_kink():
    rep = grad_check(lambda x: T.relu(x), 0.0)
    assert rep.nonsmooth.all()
    assert rep.passed


def test_grad_check_cross_entropy_4_classes():
    from tiprdc.objectives import cross_entropy_loss

    rng = np.random.default_rng(3)
    labels = rng.integers(0, 4, size=5)
    rep = grad_check(lambda z: cross_entropy_loss(z, labels), rng.standard_normal((5, 4)))
    assert rep.passed, rep.max_rel_error


def _smooth_cases(rng):
    A = rng.standard_normal((3, 4))
    B = rng.standard_normal((4, 2))
    b = rng.standard_normal(4)
    return {
        "matmul_left": (lambda x: T.sum(T.matmul(x, Tensor(B)) * T.matmul(x, Tensor(B))), (3, 4)),
        "matmul_right": (lambda x: T.sum(T.exp(T.matmul(Tensor(A), x) * 0.3)), (4, 2)),
        "add": (lambda x: T.sum((x + Tensor(A)) * x), (3, 4)),
        "sub": (lambda x: T.sum((Tensor(A) - x) * (Tensor(A) - x)), (3, 4)),
        "mul": (lambda x: T.sum(x * x * Tensor(A)), (3, 4)),
        "bias_add_x": (lambda x: T.sum(T.softplus(T.bias_add(x, Tensor(b)))), (3, 4)),
        "bias_add_b": (lambda x: T.sum(T.sigmoid(T.bias_add(Tensor(A), x))), (4,)),
        "sigmoid": (lambda x: T.sum(T.sigmoid(x) * Tensor(A)), (3, 4)),
        "tanh": (lambda x: T.sum(T.tanh(x) * Tensor(A)), (3, 4)),
        "softplus": (lambda x: T.sum(T.softplus(x) * Tensor(A)), (3, 4)),
        "log": (lambda x: T.sum(T.log(T.exp(x) + 1.5)), (3, 4)),
        "exp": (lambda x: T.sum(T.exp(x * 0.5) * Tensor(A)), (3, 4)),
        "mean_axis": (lambda x: T.sum(T.exp(T.mean(x, axis=1))), (3, 4)),
        "sum_axis": (lambda x: T.sum(T.exp(T.sum(x, axis=0) * 0.2)), (3, 4)),
        "logsumexp": (lambda x: T.sum(T.logsumexp(x, axis=1) * Tensor(np.arange(1.0, 4.0))), (3, 4)),
        "concat": (lambda x: T.sum(T.concat([x, x * x], axis=1) * Tensor(np.ones((3, 8)))), (3, 4)),
        "slice": (lambda x: T.sum(T.exp(T.slice(x, 1, 3, axis=1))), (3, 4)),
        "reshape": (lambda x: T.sum(T.reshape(x, (4, 3)) * Tensor(A.reshape(4, 3))), (3, 4)),
        "relu_away_from_kink": (lambda x: T.sum(T.relu(x) * Tensor(A)), (3, 4)),
    }


@pytest.mark.parametrize("name", sorted(_smooth_cases(np.random.default_rng(0))))
def test_op_gradients_match_finite_differences(name):
    worst = 0.0
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        f, shape = _smooth_cases(rng)[name]
        rep = grad_check(f, rng.standard_normal(shape), h=1e-5, tol=1e-4)
        worst = max(worst, rep.max_rel_error)
    assert worst <= 1e-4, f"{name}: {worst}"


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((8, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        loss = T.mean(T.softplus(T.matmul(x, w)))
        T.backward(loss)
        return loss.data.tobytes(), w.grad.tobytes()

    assert run() == run()


def test_one_hot():
    oh = T.one_hot(np.array([0, 2, 1]), 3)
    np.testing.assert_array_equal(oh.data, np.eye(3)[[0, 2, 1]])
    with pytest.raises(ValueError):
        T.one_hot(np.array([3]), 3)
