import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hinglish_erc import neuralcore as nc
from hinglish_erc.errors import NumericalError
from hinglish_erc.neuralcore import Tensor


def param(data, name="p"):
    store = nc.ParamStore()
    return store, store.add(name, data)


def check(f, tensors, tol=1e-4, **kw):
    report = nc.grad_check(f, [(f"t{i}", t) for i, t in enumerate(tensors)], tol=tol, **kw)
    assert report.passed, report.per_param
    return report


class TestLinear:
    def test_identity(self):
        x = Tensor([[1.0, -2.0, 3.0]])
        out = nc.linear_forward(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_hand_matmul(self):
        out = nc.linear_forward(Tensor([[1.0, 2.0]]), Tensor([[1.0, 1.0], [0.0, 1.0]]), Tensor([1.0, 0.0]))
        np.testing.assert_array_equal(out.data, [[4.0, 2.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nc.linear_forward(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    def test_gradient(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)
        c = rng.normal(size=(3, 2))
        check(lambda: (nc.linear_forward(x, w, b) * c).sum(), [x, w, b])


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(nc.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_large_inputs_do_not_overflow(self):
        np.testing.assert_allclose(nc.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_log_values(self):
        out = nc.softmax(Tensor(np.log([1.0, 2.0, 3.0]))).data
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(2, 9), st.integers(0, 2**31 - 1))
    def test_rows_sum_to_one(self, n, k, seed):
        x = np.random.default_rng(seed).normal(scale=30, size=(n, k))
        out = nc.softmax(Tensor(x)).data
        assert np.all(np.abs(out.sum(axis=1) - 1) <= 1e-12)
        assert np.all(out >= 0)

    def test_gradient(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        c = rng.normal(size=(2, 5))
        check(lambda: (nc.softmax(x) * c).sum(), [x])
        check(lambda: (nc.log_softmax(x) * c).sum(), [x])


class TestActivations:
    def test_values(self):
        assert nc.leaky_relu(Tensor([-1.0]), 0.01).data[0] == pytest.approx(-0.01)
        assert nc.relu(Tensor([-5.0])).data[0] == 0.0
        np.testing.assert_array_equal(nc.leaky_relu(Tensor([2.0, 0.0])).data, [2.0, 0.0])

    def test_gradients_away_from_kink(self):
        rng = np.random.default_rng(2)
        x0 = rng.normal(size=20)
        x0 = x0[np.abs(x0) >= 1e-3]
        x = Tensor(x0, requires_grad=True)
        c = rng.normal(size=x0.shape)
        check(lambda: (nc.leaky_relu(x, 0.01) * c).sum(), [x])
        check(lambda: (nc.relu(x) * c).sum(), [x])
        check(lambda: (nc.sigmoid(x) * c).sum(), [x])
        check(lambda: (nc.tanh(x) * c).sum(), [x])


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.arange(6.0))
        assert nc.dropout(x, 0.7, training=False, rng=None) is x

    def test_zero_p_is_identity(self):
        x = Tensor(np.arange(6.0))
        np.testing.assert_array_equal(nc.dropout(x, 0.0, True, np.random.default_rng(0)).data, x.data)

    def test_mean_preserved(self):
        x = Tensor(np.full(200_000, 2.0))
        out = nc.dropout(x, 0.5, True, np.random.default_rng(3)).data
        assert abs(out.mean() - 2.0) <= 0.05 * 2.0
        assert set(np.unique(out)) <= {0.0, 4.0}

    def test_rejects_p_one(self):
        with pytest.raises(ValueError):
            nc.dropout(Tensor([1.0]), 1.0, True, np.random.default_rng(0))


class TestBatchNorm:
    def test_train_normalises_columns(self):
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 3)
        x = np.random.default_rng(4).normal(5, 3, size=(64, 3))
        out = bn(Tensor(x), training=True).data
        np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=0), 1, atol=1e-4)

    def test_affine(self):
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 2)
        bn.gamma.data[:] = 2.0
        bn.beta.data[:] = 3.0
        x = np.random.default_rng(5).normal(size=(500, 2))
        out = bn(Tensor(x), training=True).data
        np.testing.assert_allclose(out.mean(axis=0), 3, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 2, atol=1e-4)

    def test_eval_identity_with_unit_stats(self):
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 2, eps=0.0)
        x = Tensor([[1.0, -2.0], [3.0, 4.0]])
        np.testing.assert_allclose(bn(x, training=False).data, x.data)

    def test_running_stats_update(self):
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 1)
        bn(Tensor([[1.0], [3.0]]), training=True)
        assert bn.running_mean[0] == pytest.approx(0.1 * 2.0)
        assert bn.running_var[0] == pytest.approx(0.9 + 0.1 * 2.0)

    def test_single_row_train_without_stats_errors(self):
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 2)
        with pytest.raises(ValueError):
            bn(Tensor([[1.0, 2.0]]), training=True)
        bn(Tensor([[1.0, 2.0], [0.0, 1.0]]), training=True)
        assert bn(Tensor([[1.0, 2.0]]), training=True).shape == (1, 2)

    def test_gradient(self):
        rng = np.random.default_rng(6)
        store = nc.ParamStore()
        bn = nc.BatchNorm1d(store, "bn", 3)
        bn.gamma.data[:] = rng.normal(size=3)
        bn.beta.data[:] = rng.normal(size=3)
        x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        c = rng.normal(size=(5, 3))
        check(lambda: (bn(x, training=True) * c).sum(), [x, bn.gamma, bn.beta])


class TestAttention:
    def test_single_key_weight_is_one(self):
        store = nc.ParamStore(0)
        mha = nc.MultiHeadAttention(store, "att", 8, 2)
        rng = np.random.default_rng(7)
        q, k, v = (Tensor(rng.normal(size=(1, 8))) for _ in range(3))
        out, w = mha(q, k, v)
        np.testing.assert_array_equal(w.data, 1.0)
        expected = (v.data @ mha.v.weight.data.T) @ mha.out.weight.data.T
        np.testing.assert_allclose(out.data, expected, rtol=1e-12)

    def test_identity_projections_return_values(self):
        store = nc.ParamStore(0)
        mha = nc.MultiHeadAttention(store, "att", 4, 1)
        for lin in (mha.q, mha.k, mha.v, mha.out):
            lin.weight.data[...] = np.eye(4)
        v = Tensor([[1.0, 2.0, 3.0, 4.0]])
        out, _ = mha(Tensor(np.ones((1, 4))), Tensor(np.zeros((1, 4))), v)
        np.testing.assert_allclose(out.data, v.data)

    def test_indivisible_heads(self):
        with pytest.raises(ValueError):
            nc.MultiHeadAttention(nc.ParamStore(), "att", 10, 4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_weight_rows_sum_to_one(self, b, lq, lk, seed):
        rng = np.random.default_rng(seed)
        mha = nc.MultiHeadAttention(nc.ParamStore(seed), "att", 8, 4)
        _, w = mha(Tensor(rng.normal(size=(b, lq, 8)) * 5), Tensor(rng.normal(size=(b, lk, 8)) * 5), Tensor(rng.normal(size=(b, lk, 8))))
        assert w.shape == (b, 4, lq, lk)
        assert np.all(np.abs(w.data.sum(axis=-1) - 1) <= 1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(8)
        store = nc.ParamStore(1)
        mha = nc.MultiHeadAttention(store, "att", 8, 2)
        q = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        kv = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        c = rng.normal(size=(2, 8))
        report = nc.grad_check(lambda: (mha(q, kv, kv)[0] * c).sum(), list(store) + [("q", q), ("kv", kv)])
        assert report.passed, report.per_param


class TestGRU:
    def test_zero_weights_stay_at_zero(self):
        store = nc.ParamStore()
        gru = nc.GRUStack(store, "gru", 3, 4)
        for p in store:
            p.data[...] = 0
        out, finals = gru(Tensor(np.random.default_rng(0).normal(size=(1, 5, 3))))
        np.testing.assert_array_equal(out.data, 0)
        np.testing.assert_array_equal(finals.data, 0)

    def test_forced_initial_state_halves(self):
        store = nc.ParamStore()
        w, u, b = store.zeros("w", (12, 3)), store.zeros("u", (12, 4)), store.zeros("b", (12,))
        v = np.array([1.0, -2.0, 0.5, 4.0])
        hs = nc.gru_layer(Tensor(np.ones((1, 2, 3))), w, u, b, h0=v).data
        np.testing.assert_allclose(hs[0, 0], 0.5 * v)
        np.testing.assert_allclose(hs[0, 1], 0.25 * v)

    def test_matches_unfused_recurrence(self):
        rng = np.random.default_rng(9)
        H, I = 3, 2
        w, u, b = rng.normal(size=(3 * H, I)), rng.normal(size=(3 * H, H)), rng.normal(size=3 * H)
        x = rng.normal(size=(1, 4, I))
        out = nc.gru_layer(Tensor(x), Tensor(w), Tensor(u), Tensor(b)).data[0]
        sig = lambda a: 1 / (1 + np.exp(-a))
        h = np.zeros(H)
        for t in range(4):
            z = sig(w[:H] @ x[0, t] + u[:H] @ h + b[:H])
            r = sig(w[H:2 * H] @ x[0, t] + u[H:2 * H] @ h + b[H:2 * H])
            c = np.tanh(w[2 * H:] @ x[0, t] + u[2 * H:] @ (r * h) + b[2 * H:])
            h = (1 - z) * h + z * c
            np.testing.assert_allclose(out[t], h, rtol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(1, 10))
    def test_shapes(self, steps):
        gru = nc.GRUStack(nc.ParamStore(0), "gru", 4, 5)
        out, finals = gru(Tensor(np.ones((1, steps, 4))))
        assert out.shape == (1, steps, 5)
        assert finals.shape == (1, 2, 5)
        np.testing.assert_array_equal(finals.data[:, 1], out.data[:, -1])

    def test_empty_sequence_rejected(self):
        gru = nc.GRUStack(nc.ParamStore(0), "gru", 4, 5)
        with pytest.raises(ValueError):
            gru(Tensor(np.ones((1, 0, 4))))

    def test_gradient(self):
        rng = np.random.default_rng(10)
        store = nc.ParamStore(2)
        gru = nc.GRUStack(store, "gru", 4, 5, layers=2, dropout_p=0.25)
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        c = rng.normal(size=(2, 3, 5))
        cf = rng.normal(size=(2, 2, 5))

        def f():
            out, finals = gru(x, training=True, rng=np.random.default_rng(0))
            return (out * c).sum() + (finals * cf).sum()

        report = nc.grad_check(f, list(store) + [("x", x)])
        assert report.passed, report.per_param


class TestCrossEntropy:
    def test_correct_one_hot_probs(self):
        probs = Tensor(np.eye(3))
        assert nc.cross_entropy(probs, [0, 1, 2], from_probs=True).item() == 0.0

    def test_uniform_probs(self):
        probs = Tensor(np.full((2, 8), 1 / 8))
        assert nc.cross_entropy(probs, [3, 5], from_probs=True).item() == pytest.approx(math.log(8), abs=1e-12)
        assert nc.cross_entropy(Tensor(np.zeros((2, 8))), [3, 5]).item() == pytest.approx(math.log(8), abs=1e-12)

    def test_fused_gradient(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        targets = [1, 4]
        nc.cross_entropy(x, targets).backward()
        expected = nc.softmax(Tensor(x.data)).data
        expected[[0, 1], targets] -= 1
        np.testing.assert_allclose(x.grad, expected / 2, rtol=1e-12)
        check(lambda: nc.cross_entropy(x, targets), [x])

    def test_target_out_of_range(self):
        with pytest.raises(ValueError):
            nc.cross_entropy(Tensor(np.zeros((1, 3))), [3])


class TestEngine:
    def test_backward_accumulates(self):
        _, w = param([1.0, 2.0])
        loss = (w * Tensor([3.0, 4.0])).sum()
        loss.backward()
        np.testing.assert_array_equal(w.grad, [3.0, 4.0])
        loss.backward()
        np.testing.assert_array_equal(w.grad, [6.0, 8.0])

    def test_shared_subgraph(self):
        _, w = param([2.0])
        y = w * w
        (y + y).sum().backward()
        np.testing.assert_array_equal(w.grad, [8.0])

    def test_nonfinite_aborts_with_op_name(self):
        with pytest.raises(NumericalError, match="log"):
            nc.log(Tensor([0.0]))

    def test_index_accumulates_repeats(self):
        _, w = param(np.arange(6.0).reshape(3, 2))
        nc.index(w, np.array([0, 0, 2])).sum().backward()
        np.testing.assert_array_equal(w.grad, [[2, 2], [0, 0], [1, 1]])

    def test_broadcast_add_gradient(self):
        rng = np.random.default_rng(12)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4,)), requires_grad=True)
        c = rng.normal(size=(3, 4))
        check(lambda: ((a + b) * c).sum() + (a * b).mean(), [a, b])

    def test_concat_transpose_reshape_gradient(self):
        rng = np.random.default_rng(13)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        c = rng.normal(size=(5, 2))
        check(lambda: (nc.transpose(nc.concat([a, b], axis=1)) * c).sum() + nc.reshape(a, (3, 2)).sum(), [a, b])


class TestGradCheck:
    def test_detects_wrong_backward(self):
        _, w = param([0.3, -1.2, 2.0])

        def doubled():
            out = (w * w).sum()
            real = out._backward
            out._backward = lambda g: tuple(2 * x for x in real(g))
            return out

        assert not nc.grad_check(doubled, [("w", w)]).passed
        assert nc.grad_check(lambda: (w * w).sum(), [("w", w)]).passed

    def test_subsampling(self):
        _, w = param(np.random.default_rng(0).normal(size=(10, 10)))
        report = nc.grad_check(lambda: (w * w).sum(), [("w", w)], max_entries=7)
        assert report.checked == 7 and report.passed


class TestCheckpoint:
    def test_round_trip_is_lossless(self, tmp_path):
        store = nc.ParamStore(3)
        nc.Linear(store, "lin", 4, 3)
        nc.BatchNorm1d(store, "bn", 3)
        store.params["lin.bias"].data[...] = np.random.default_rng(0).normal(size=3)
        store.buffers["bn.running_var"][...] = [1 / 3, 2.5, np.pi]
        nc.save_checkpoint(store, tmp_path / "ck")
        other = nc.ParamStore(99)
        nc.Linear(other, "lin", 4, 3)
        nc.BatchNorm1d(other, "bn", 3)
        nc.load_checkpoint(other, tmp_path / "ck")
        for k, v in store.snapshot().items():
            assert np.array_equal(v, other.snapshot()[k])

    def test_bytes_are_deterministic(self, tmp_path):
        for name in ("a", "b"):
            store = nc.ParamStore(5)
            nc.Linear(store, "lin", 4, 3)
            nc.save_checkpoint(store, tmp_path / name)
        for f in ("params.json", "params.bin"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
