import math

import numpy as np
import pytest

from myanner import tensor as tn
from myanner.tensor import Tape, TapeError, Tensor, grad_check


def param(a):
    return Tensor(np.asarray(a, dtype=float), requires_grad=True)


def test_matmul_values_and_errors():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(tn.matmul(eye, m).data, m.data)
    assert tn.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]
    with pytest.raises(ValueError):
        tn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradients():
    rng = np.random.default_rng(0)
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    assert grad_check(lambda: tn.sum_(tn.matmul(a, b)), [a, b]) <= 1e-6
    c = Tensor(rng.normal(size=(3, 2)))
    assert grad_check(lambda: tn.sum_(tn.mul(tn.matmul(a, b), c)), [a, b]) <= 1e-6


def test_elementwise_values():
    assert tn.sigmoid(Tensor(0.0)).item() == 0.5
    assert tn.tanh(Tensor(0.0)).item() == 0.0
    assert tn.mul(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data.tolist() == [3.0, 8.0]
    assert tn.elementwise("add", Tensor([1.0]), Tensor([2.0])).data.tolist() == [3.0]
    with pytest.raises(ValueError):
        tn.mul(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        tn.elementwise("pow", Tensor([1.0]))


def test_sigmoid_is_stable_for_large_inputs():
    s = tn.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0


def test_bias_broadcast_only_over_leading_dims():
    x, b = Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0])
    assert tn.add(x, b).data.tolist() == [[1, 2, 3], [1, 2, 3]]
    with pytest.raises(ValueError):
        tn.add(x, Tensor([1.0, 2.0]))


def test_elementwise_gradients():
    rng = np.random.default_rng(1)
    a, b = param(rng.normal(size=5)), param(rng.normal(size=5))
    assert grad_check(lambda: tn.sum_(tn.mul(a, b)), [a, b]) <= 1e-6
    assert grad_check(lambda: tn.sum_(tn.sigmoid(tn.mul(a, b))), [a, b]) <= 1e-6
    assert grad_check(lambda: tn.sum_(tn.tanh(tn.sub(a, b))), [a, b]) <= 1e-6
    w, bias = param(rng.normal(size=(4, 5))), param(rng.normal(size=5))
    assert grad_check(lambda: tn.sum_(tn.tanh(tn.add(w, bias))), [w, bias]) <= 1e-6


def test_log_sum_exp():
    assert tn.log_sum_exp(Tensor(np.zeros(4))).item() == pytest.approx(math.log(4), abs=1e-15)
    assert tn.log_sum_exp(Tensor([1000.0, 1000.0])).item() == pytest.approx(1000 + math.log(2), abs=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.normal(size=int(rng.integers(1, 10)))
        ref = math.log(math.fsum(math.exp(v) for v in x))
        got = tn.log_sum_exp(Tensor(x)).item()
        assert abs(got - ref) <= 1e-10
        assert x.max() <= got <= x.max() + math.log(len(x)) + 1e-12
    with pytest.raises(ValueError):
        tn.log_sum_exp(Tensor(np.zeros(0)))
    m = param(rng.normal(size=(3, 4)))
    assert grad_check(lambda: tn.sum_(tn.log_sum_exp(m, axis=1)), [m]) <= 1e-6
    assert grad_check(lambda: tn.sum_(tn.log_sum_exp(m, axis=0)), [m]) <= 1e-6


def test_concat_stack_getitem_reshape_gradients():
    rng = np.random.default_rng(3)
    a, b = param(rng.normal(size=(2, 3))), param(rng.normal(size=(2, 2)))
    w = Tensor(rng.normal(size=(2, 5)))
    assert grad_check(lambda: tn.sum_(tn.mul(tn.concat([a, b], axis=1), w)), [a, b]) <= 1e-6
    c = param(rng.normal(size=(2, 3)))
    w2 = Tensor(rng.normal(size=(2, 2, 3)))
    assert grad_check(lambda: tn.sum_(tn.mul(tn.stack([a, c], axis=1), w2)), [a, c]) <= 1e-6
    idx = np.array([0, 1, 1])
    assert grad_check(lambda: tn.sum_(tn.tanh(a[idx, [2, 0, 0]])), [a]) <= 1e-6
    assert grad_check(lambda: tn.sum_(tn.tanh(tn.reshape(a, (3, 2)))), [a]) <= 1e-6
    assert grad_check(lambda: tn.sum_(tn.tanh(tn.max_(a, axis=1))), [a]) <= 1e-6


def test_embedding_lookup():
    table = param(np.arange(12.0).reshape(4, 3))
    out = tn.embedding_lookup(table, np.array([[1, 1], [3, 0]]))
    assert out.shape == (2, 2, 3)
    assert out.data[0, 1].tolist() == [3.0, 4.0, 5.0]
    with Tape() as tape:
        loss = tn.sum_(tn.embedding_lookup(table, np.array([1, 1, 2])))
        tape.backward(loss)
    assert table.grad[:, 0].tolist() == [0.0, 2.0, 1.0, 0.0]
    with pytest.raises(IndexError):
        tn.embedding_lookup(table, np.array([4]))
    with pytest.raises(IndexError):
        tn.embedding_lookup(table, np.array([-1]))


def test_embedding_padding_row_receives_no_gradient():
    table = param(np.ones((3, 2)))
    with Tape() as tape:
        tape.backward(tn.sum_(tn.embedding_lookup(table, np.array([0, 2]), padding_idx=0)))
    assert table.grad[0].tolist() == [0.0, 0.0]
    assert table.grad[2].tolist() == [1.0, 1.0]


def test_dropout():
    x = Tensor(np.arange(6.0))
    rng = np.random.default_rng(0)
    assert tn.dropout(x, 0.5, training=False, rng=rng) is x
    assert tn.dropout(x, 0.0, training=True, rng=rng) is x
    ones = Tensor(np.ones(100_000))
    kept = tn.dropout(ones, 0.5, training=True, rng=rng).data
    assert set(np.unique(kept)) <= {0.0, 2.0}
    assert abs(kept.mean() - 1.0) < 0.02
    with pytest.raises(ValueError):
        tn.dropout(x, 1.0, training=True, rng=rng)


def test_backward_semantics():
    w = param([1.0, 2.0, 3.0])
    with Tape() as tape:
        tape.backward(tn.sum_(w))
    assert w.grad.tolist() == [1.0, 1.0, 1.0]
    w = param([1.0, 2.0])
    with Tape() as tape:
        tape.backward(tn.sum_(tn.mul(w, w)))
    assert w.grad.tolist() == [2.0, 4.0]


def test_gradients_accumulate_across_uses():
    w = param([3.0])
    with Tape() as tape:
        y = tn.add(tn.mul(w, w), w)  # dy/dw = 2w + 1
        tape.backward(tn.sum_(y))
    assert w.grad.tolist() == [7.0]


def test_backward_errors():
    w = param([1.0, 2.0])
    with Tape() as tape:
        with pytest.raises(ValueError):
            tape.backward(tn.mul(w, w))
    with Tape() as tape:
        loss = tn.sum_(tn.mul(w, w))
        tape.backward(loss)
        with pytest.raises(TapeError):
            tape.backward(loss)


def test_tape_records_in_order_and_is_cleared():
    w = param([1.0])
    with Tape() as tape:
        a = tn.scale(w, 2.0)
        b = tn.tanh(a)
        assert tape.nodes[-2:] == [a, b]
        tape.backward(tn.sum_(b))
    assert tape.nodes == []


def test_ops_do_not_mutate_inputs():
    rng = np.random.default_rng(4)
    a = param(rng.normal(size=(2, 3)))
    before = a.data.copy()
    with Tape() as tape:
        y = tn.sum_(tn.tanh(tn.reshape(tn.transpose(a), (6,))))
        tape.backward(y)
    assert np.array_equal(a.data, before)


def test_no_grad_records_nothing():
    w = param([1.0])
    with tn.no_grad():
        y = tn.mul(w, w)
    assert not y.requires_grad


def test_determinism():
    def run():
        rng = np.random.default_rng(7)
        a = param(rng.normal(size=(3, 3)))
        with Tape() as tape:
            loss = tn.sum_(tn.sigmoid(tn.matmul(a, a)))
            tape.backward(loss)
        return loss.item(), a.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2 and np.array_equal(g1, g2)


def test_grad_check_oracle_properties():
    rng = np.random.default_rng(5)
    w = param(rng.normal(size=4))
    c = Tensor(rng.normal(size=4))
    assert grad_check(lambda: tn.sum_(tn.mul(w, c)), [w]) <= 1e-10
    assert grad_check(lambda: tn.sum_(tn.sigmoid(tn.sigmoid(w))), [w]) <= 1e-6
    wrong = [c.data + 0.1]
    assert grad_check(lambda: tn.sum_(tn.mul(w, c)), [w], analytic=wrong) > 1e-2


def test_grad_check_subsamples_large_parameters():
    calls = []
    w = param(np.zeros(1000))

    def f():
        calls.append(1)
        return tn.sum_(w)

    grad_check(f, [w], max_coords=10)
    assert len(calls) == 1 + 2 * 100
