import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swae import autograd as ag
from swae.autograd import Tensor


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


class TestForwardOps:
    def test_matmul(self):
        out = ag.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
        np.testing.assert_array_equal(out.data, [[3], [7]])

    def test_softmax_uniform(self):
        np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_squared_distance_identity(self):
        x = Tensor([1.0, -2.0, 0.5])
        assert ag.squared_distance(x, x).item() == 0.0

    def test_squared_distance_pairwise(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        y = np.array([[1.0, 0.0], [0.0, 3.0], [2.0, 2.0]])
        expected = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
        np.testing.assert_allclose(ag.squared_distance(Tensor(x), Tensor(y)).data, expected)

    @pytest.mark.parametrize(
        "op, a, b",
        [
            (ag.add, (2, 3), (4, 3)),
            (ag.mul, (2, 3), (2,)),
            (ag.matmul, (2, 3), (2, 3)),
            (ag.squared_distance, (2, 3), (2, 4)),
        ],
    )
    def test_shape_mismatch_names_shapes(self, op, a, b):
        with pytest.raises(ValueError, match=r"\(2, 3\)"):
            op(Tensor(np.zeros(a)), Tensor(np.zeros(b)))

    def test_concat_mismatch(self):
        with pytest.raises(ValueError, match="concat"):
            ag.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_cross_entropy_uniform_is_log_v(self):
        logits = Tensor(np.zeros((5, 7)))
        ce = ag.cross_entropy(logits, np.arange(5) % 7)
        assert ce.item() == pytest.approx(5 * np.log(7), abs=1e-12)


class TestBackward:
    def test_sum_linearity(self):
        x = leaf([1.0, 2.0, 3.0])
        ag.backward(x.sum())
        np.testing.assert_array_equal(x.grad, [1, 1, 1])

    def test_square(self):
        x = leaf(3.0)
        ag.backward(x * x)
        assert x.grad == 6.0

    def test_non_scalar_rejected(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            ag.backward(x * 2.0)

    def test_fanout_accumulates(self):
        x = leaf([0.3, -0.7])
        branches = [ag.tanh(x).sum(), (x * x).sum(), ag.exp(x).sum()]
        ag.backward(branches[0] + branches[1] + branches[2])
        expected = (1 - np.tanh(x.data) ** 2) + 2 * x.data + np.exp(x.data)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-14)

    def test_every_ancestor_gets_grad(self):
        a, b = leaf([1.0, 2.0]), leaf([0.5, 0.5])
        mid = a * b
        loss = (mid + a).sum()
        ag.backward(loss)
        for t in (a, b, mid, loss):
            assert t.grad is not None and t.grad.shape == t.shape

    def test_random_two_layer_net(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.uniform(-2, 2, (4, 3)))
        w1, b1 = leaf(rng.uniform(-1, 1, (3, 5))), leaf(rng.uniform(-1, 1, 5))
        w2, b2 = leaf(rng.uniform(-1, 1, (5, 2))), leaf(rng.uniform(-1, 1, 2))

        def f():
            return ag.tanh(ag.tanh(x @ w1 + b1) @ w2 + b2).sum()

        assert ag.finite_difference_check(f, [w1, b1, w2, b2], 1e-5) < 1e-4


UNARY = {
    "tanh": ag.tanh,
    "sigmoid": ag.sigmoid,
    "exp": ag.exp,
    "log": lambda t: ag.log(ag.exp(t) + 0.5),
    "softmax": lambda t: ag.softmax(t) * Tensor(np.arange(1.0, 5.0)),
    "log_softmax": lambda t: ag.log_softmax(t) * Tensor(np.arange(1.0, 5.0)),
    "square": ag.square,
    "neg": ag.neg,
    "sum_axis": lambda t: t.reshape(2, 2).sum(axis=0),
    "mean": lambda t: t.mean() * t,
    "slice": lambda t: t[1:3] * t[0:2],
    "advanced_index": lambda t: t[np.array([0, 0, 3])],
    "transpose": lambda t: t.reshape(2, 2).T @ Tensor([1.0, 2.0]),
}


@settings(max_examples=25, deadline=None)
@given(
    name=st.sampled_from(sorted(UNARY)),
    values=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)
def test_unary_ops_match_finite_differences(name, values):
    x = leaf(values)
    weights = Tensor(np.linspace(0.3, 1.7, UNARY[name](Tensor(values)).size))

    def f():
        return (UNARY[name](x).reshape(-1) * weights).sum()

    assert ag.finite_difference_check(f, [x], 1e-5) < 1e-4


BINARY = {
    "add_broadcast": lambda a, b: a.reshape(2, 2) + b[0:2],
    "sub": lambda a, b: a - b,
    "mul_broadcast": lambda a, b: a.reshape(2, 2) * b[1:3],
    "div": lambda a, b: a / (ag.exp(b) + 0.1),
    "matmul": lambda a, b: a.reshape(2, 2) @ b.reshape(2, 2),
    "matmul_vec": lambda a, b: a.reshape(2, 2) @ b[0:2],
    "concat": lambda a, b: ag.concat([a.reshape(2, 2), b.reshape(2, 2)], axis=1) * Tensor(np.arange(8.0).reshape(2, 4)),
    "stack": lambda a, b: ag.stack([a, b], axis=1) * Tensor(np.arange(8.0).reshape(4, 2)),
    "sqdist": lambda a, b: ag.squared_distance(a.reshape(2, 2), b.reshape(2, 2)),
    "sqdist_vec": lambda a, b: ag.squared_distance(a, b),
    "cross_entropy": lambda a, b: ag.cross_entropy(ag.stack([a, b]), np.array([1, 3]), np.array([1.0, 0.5])),
    "lstm_cell": lambda a, b: ag.lstm_cell(ag.concat([a, b]).reshape(2, 4), b[0:2].reshape(2, 1)),
}


@settings(max_examples=30, deadline=None)
@given(
    name=st.sampled_from(sorted(BINARY)),
    a=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    b=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)
def test_binary_ops_match_finite_differences(name, a, b):
    ta, tb = leaf(a), leaf(b)
    out = BINARY[name](Tensor(a), Tensor(b))
    weights = Tensor(np.linspace(0.3, 1.7, out.size))

    def f():
        return (BINARY[name](ta, tb).reshape(-1) * weights).sum()

    assert ag.finite_difference_check(f, [ta, tb], 1e-5) < 1e-4


class TestFiniteDifferenceCheck:
    def test_quadratic(self):
        x = leaf(1.0)
        assert ag.finite_difference_check(lambda: x * x, [x], 1e-5) < 1e-6

    def test_linear(self):
        x = leaf([1.0, -2.0, 0.5])
        w = Tensor([0.25, 0.5, 2.0])
        assert ag.finite_difference_check(lambda: (x * w).sum(), [x], 1e-5) < 1e-9

    def test_detects_wrong_gradient(self):
        x = leaf([0.5, 1.5])

        def broken():
            y = ag.tanh(x)
            y._backward = lambda g: ag._accumulate(x, 2.0 * g)
            return y.sum()

        assert ag.finite_difference_check(broken, [x], 1e-5) > 0.1

    def test_leaves_params_and_grads_clean(self):
        x = leaf([0.5, 1.5])
        before = x.data.copy()
        ag.finite_difference_check(lambda: (x * x).sum(), [x], 1e-5)
        np.testing.assert_array_equal(x.data, before)
        assert x.grad is None


class TestNoGrad:
    def test_no_graph_recorded(self):
        x = leaf([1.0])
        with ag.no_grad():
            y = x * 2.0
        assert not y.requires_grad and y._parents == ()


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = np.array([1.0, -2.0])
        state = ag.OptimState.for_params([p])
        for _ in range(5):
            ag.adam_step([p], [np.zeros(2)], state, 0.1)
        np.testing.assert_array_equal(p, [1.0, -2.0])

    def test_first_step_is_unit_update(self):
        # m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
        p = np.array([1.0])
        state = ag.OptimState.for_params([p])
        ag.adam_step([p], [np.array([1.0])], state, 0.1)
        assert p[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
        assert state.step == 1

    def test_identical_params_stay_identical(self):
        rng = np.random.default_rng(3)
        p = np.array([0.7, 0.7])
        state = ag.OptimState.for_params([p])
        for _ in range(50):
            g = rng.normal()
            ag.adam_step([p], [np.array([g, g])], state, 0.01)
        assert p[0] == p[1]

    def test_step_counter_increases(self):
        p = np.zeros(3)
        state = ag.OptimState()
        for i in range(1, 4):
            ag.adam_step([p], [np.ones(3)], state, 0.01)
            assert state.step == i

    @pytest.mark.parametrize("lr", [0.0, -0.1])
    def test_rejects_non_positive_lr(self, lr):
        with pytest.raises(ValueError, match="learning rate"):
            ag.adam_step([np.zeros(1)], [np.zeros(1)], ag.OptimState(), lr)


class TestSgd:
    def test_definition(self):
        p = np.array([1.0])
        ag.sgd_step([p], [np.array([2.0])], 0.1)
        assert p[0] == pytest.approx(0.8, abs=1e-15)

    def test_zero_gradient(self):
        p = np.array([1.0])
        ag.sgd_step([p], [np.zeros(1)], 0.1)
        assert p[0] == 1.0

    def test_quadratic_geometric_decay(self):
        # grad of p^2 is 2p, so p <- p - 0.4 * 2p = 0.2 p
        p = np.array([1.0])
        for t in range(1, 11):
            ag.sgd_step([p], [2.0 * p], 0.4)
            assert p[0] == pytest.approx(0.2**t, rel=1e-12)

    def test_rejects_non_positive_lr(self):
        with pytest.raises(ValueError):
            ag.sgd_step([np.zeros(1)], [np.zeros(1)], 0.0)


def test_clip_grad_norm():
    grads = [np.array([3.0, 0.0]), np.array([4.0])]
    norm = ag.clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(sum((g**2).sum() for g in grads)) == pytest.approx(1.0)
    small = [np.array([0.1])]
    ag.clip_grad_norm(small, 5.0)
    assert small[0][0] == 0.1
