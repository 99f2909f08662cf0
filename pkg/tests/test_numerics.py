import math

import numpy as np
import pytest

from conftest import make_random_graph
from sail import checkpoint as ckpt
from sail import numerics, rng
from sail.graph import normalized_adjacency


def _gen(key=0):
    return np.random.Generator(np.random.Philox(key=key))


class TestPrimitiveValues:
    def test_softmax_uniform(self):
        np.testing.assert_allclose(numerics.rowwise_softmax(np.zeros((1, 3))),
                                   np.full((1, 3), 1 / 3))

    def test_log_sigmoid_at_zero(self):
        assert numerics.log_sigmoid(np.array([0.0]))[0] == pytest.approx(-math.log(2))

    def test_log_sigmoid_stable_at_extremes(self):
        vals = numerics.log_sigmoid(np.array([-1e4, 1e4]))
        assert vals[0] == pytest.approx(-1e4)
        assert vals[1] == pytest.approx(0.0, abs=1e-12)

    def test_cross_entropy_clamps(self):
        target = np.array([[1.0, 0.0]])
        probs = np.array([[0.0, 1.0]])  # would be -log 0 without clamping
        ce = numerics.cross_entropy_rows(target, probs)
        assert np.isfinite(ce[0]) and ce[0] == pytest.approx(-math.log(1e-12))

    def test_squared_row_distance(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[0.0, 0.0]])
        assert numerics.squared_row_distance(a, b)[0] == pytest.approx(5.0)

    def test_matmul_rejects_nonfinite(self):
        with np.errstate(over="ignore"), pytest.raises(numerics.NonFiniteError):
            numerics.matmul(np.array([[1e308]]), np.array([[1e308]]))


class TestPrimitiveGradients:
    """Central-difference verification of every registered VJP."""

    def fd(self, loss, grad, param, rtol=1e-4):
        report = numerics.finite_difference_check(loss, param, grad, rtol=rtol)
        assert report.passed, str(report)

    def test_matmul_vjp(self):
        gen = _gen(1)
        a, b = gen.normal(size=(3, 4)), gen.normal(size=(4, 2))
        cot = gen.normal(size=(3, 2))
        ga, gb = numerics.matmul_vjp(cot, a, b)
        self.fd(lambda m: float((numerics.matmul(m, b) * cot).sum()), ga, a)
        self.fd(lambda m: float((numerics.matmul(a, m) * cot).sum()), gb, b)

    def test_sparse_dense_matmul_vjp(self):
        g = make_random_graph(2, n=9, p=0.3)
        adj = normalized_adjacency(g)
        gen = _gen(2)
        m = gen.normal(size=(9, 3))
        cot = gen.normal(size=(9, 3))
        gm = numerics.sparse_dense_matmul_vjp(cot, adj)
        self.fd(lambda p: float((numerics.sparse_dense_matmul(adj, p) * cot).sum()),
                gm, m)

    def test_add_vjp(self):
        gen = _gen(3)
        a, b = gen.normal(size=(2, 3)), gen.normal(size=(2, 3))
        cot = gen.normal(size=(2, 3))
        ga, gb = numerics.add_vjp(cot)
        self.fd(lambda p: float((numerics.add(p, b) * cot).sum()), ga, a)
        self.fd(lambda p: float((numerics.add(a, p) * cot).sum()), gb, b)

    def test_softmax_vjp(self):
        gen = _gen(4)
        logits = gen.normal(size=(3, 5))
        cot = gen.normal(size=(3, 5))

        def loss(p):
            return float((numerics.rowwise_softmax(p) * cot).sum())

        grad = numerics.rowwise_softmax_vjp(cot, numerics.rowwise_softmax(logits))
        self.fd(loss, grad, logits)

    def test_softmax_cross_entropy_logits_vjp(self):
        gen = _gen(5)
        logits = gen.normal(size=(4, 3))
        target = numerics.rowwise_softmax(gen.normal(size=(4, 3)))
        cot = gen.normal(size=4)

        def loss(p):
            probs = numerics.rowwise_softmax(p)
            return float((numerics.cross_entropy_rows(target, probs) * cot).sum())

        probs = numerics.rowwise_softmax(logits)
        grad = numerics.softmax_cross_entropy_logits_vjp(cot, probs, target)
        self.fd(loss, grad, logits)

    def test_log_sigmoid_vjp(self):
        gen = _gen(6)
        x = gen.normal(size=(3, 4))
        cot = gen.normal(size=(3, 4))
        grad = numerics.log_sigmoid_vjp(cot, x)
        self.fd(lambda p: float((numerics.log_sigmoid(p) * cot).sum()), grad, x)

    def test_squared_row_distance_vjp(self):
        gen = _gen(7)
        a, b = gen.normal(size=(4, 3)), gen.normal(size=(4, 3))
        cot = gen.normal(size=4)
        ga, gb = numerics.squared_row_distance_vjp(cot, a, b)
        self.fd(lambda p: float((numerics.squared_row_distance(p, b) * cot).sum()),
                ga, a)
        self.fd(lambda p: float((numerics.squared_row_distance(a, p) * cot).sum()),
                gb, b)

    def test_reduction_vjps(self):
        gen = _gen(8)
        a = gen.normal(size=(3, 4))
        self.fd(lambda p: numerics.total_sum(p),
                numerics.total_sum_vjp(1.0, a.shape), a)
        self.fd(lambda p: numerics.total_mean(p),
                numerics.total_mean_vjp(1.0, a.shape), a)

    @pytest.mark.parametrize("name", sorted(numerics.ACTIVATIONS))
    def test_activation_vjp(self, name):
        act, deriv = numerics.activation(name)
        gen = _gen(9)
        x = gen.normal(size=(4, 4)) + 0.05  # keep clear of the relu kink
        cot = gen.normal(size=(4, 4))
        self.fd(lambda p: float((act(p) * cot).sum()), deriv(x) * cot, x)


class TestActivationContract:
    @pytest.mark.parametrize("name", sorted(numerics.ACTIVATIONS))
    def test_derivative_bounded_by_one(self, name):
        _, deriv = numerics.activation(name)
        grid = np.linspace(-20, 20, 4001)
        assert np.all(np.abs(deriv(grid)) <= 1.0)

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            numerics.activation("sigmoidish")


class TestFiniteDifferenceCheck:
    def test_quadratic_loss_tight(self):
        gen = _gen(10)
        w = gen.normal(size=(5, 4))
        report = numerics.finite_difference_check(
            lambda p: float((p * p).sum()), w, 2 * w)
        assert report.passed and report.max_rel_error < 1e-6

    def test_constant_loss_zero_gradient(self):
        w = _gen(11).normal(size=(3, 3))
        report = numerics.finite_difference_check(lambda p: 1.5, w,
                                                  np.zeros_like(w))
        assert report.passed and report.max_rel_error == 0.0

    def test_detects_wrong_gradient(self):
        gen = _gen(12)
        w = gen.normal(size=(4, 4))
        report = numerics.finite_difference_check(
            lambda p: float((p * p).sum()), w, 3 * w)
        assert not report.passed

    def test_subsamples_large_parameters(self):
        w = _gen(13).normal(size=(40, 40))
        report = numerics.finite_difference_check(
            lambda p: float((p * p).sum()), w, 2 * w, max_coords=200)
        assert report.checked == 200
        assert report.passed


class TestAdam:
    def test_zero_gradient_no_move(self):
        w = _gen(14).normal(size=(3, 2))
        state = numerics.AdamState.init(w.shape, lr=0.1)
        new, _ = numerics.adam_step(w, np.zeros_like(w), state)
        np.testing.assert_array_equal(new, w)

    def test_first_step_is_bias_corrected_lr(self):
        # hand evaluation: m1_hat = g, v1_hat = g^2 -> step = lr * g/(|g|+eps)
        w = np.array([[1.0]])
        state = numerics.AdamState.init((1, 1), lr=0.1)
        new, state = numerics.adam_step(w, np.array([[1.0]]), state)
        expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
        assert new[0, 0] == pytest.approx(expected, rel=1e-12)
        assert state.t == 1

    def test_two_steps_hand_formula(self):
        w = np.array([[0.0]])
        state = numerics.AdamState.init((1, 1), lr=0.5)
        g = np.array([[2.0]])
        w, state = numerics.adam_step(w, g, state)
        w, state = numerics.adam_step(w, g, state)
        m2 = 0.9 * (0.1 * 2.0) + 0.1 * 2.0
        v2 = 0.999 * (0.001 * 4.0) + 0.001 * 4.0
        m2_hat = m2 / (1 - 0.9 ** 2)
        v2_hat = v2 / (1 - 0.999 ** 2)
        step1 = 0.5 * (0.2 / (1 - 0.9)) / (math.sqrt(0.004 / (1 - 0.999)) + 1e-8)
        expected = -step1 - 0.5 * m2_hat / (math.sqrt(v2_hat) + 1e-8)
        assert w[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_deterministic_across_runs(self):
        def run():
            gen = _gen(15)
            w = gen.normal(size=(4, 3))
            state = numerics.AdamState.init(w.shape, lr=0.01)
            for _ in range(25):
                w, state = numerics.adam_step(w, np.sin(w), state)
            return w

        np.testing.assert_array_equal(run(), run())

    def test_nonfinite_gradient_names_coordinate(self):
        w = np.zeros((2, 2))
        state = numerics.AdamState.init(w.shape)
        bad = np.zeros((2, 2))
        bad[1, 0] = np.nan
        with pytest.raises(numerics.NonFiniteError, match=r"\(1, 0\)"):
            numerics.adam_step(w, bad, state)

    def test_reset_clears_moments(self):
        state = numerics.AdamState.init((2, 2), lr=0.1)
        numerics.adam_step(np.ones((2, 2)), np.ones((2, 2)), state)
        state.reset()
        assert state.t == 0
        assert np.all(state.m == 0) and np.all(state.v == 0)


class TestGlorot:
    def test_bounds_and_determinism(self):
        lim = numerics.glorot_limit(30, 10)
        w1 = numerics.glorot_uniform(30, 10, rng.stream(0, "init"))
        w2 = numerics.glorot_uniform(30, 10, rng.stream(0, "init"))
        assert np.all(np.abs(w1) <= lim)
        np.testing.assert_array_equal(w1, w2)
        assert w1.shape == (30, 10)


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path):
        gen = _gen(16)
        tensors = {"student.W": gen.normal(size=(7, 3)),
                   "adam.m": gen.normal(size=(7, 3)),
                   "epoch": ckpt.save_scalar(42)}
        path = tmp_path / "x.sailckpt"
        ckpt.save_tensors(path, tensors)
        loaded = ckpt.load_tensors(path)
        assert list(loaded) == list(tensors)
        for name in tensors:
            np.testing.assert_array_equal(loaded[name], tensors[name])
        assert ckpt.load_scalar(loaded["epoch"]) == 42.0

    def test_magic_mismatch(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTSAILX" + b"\x00" * 16)
        with pytest.raises(ckpt.CheckpointError, match="magic"):
            ckpt.load_tensors(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.ckpt"
        ckpt.save_tensors(path, {"w": np.ones((4, 4))})
        data = path.read_bytes()
        path.write_bytes(data[:-9])
        with pytest.raises(ckpt.CheckpointError, match="truncated"):
            ckpt.load_tensors(path)

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(ckpt.CheckpointError):
            ckpt.save_tensors(tmp_path / "y.ckpt", {"w": np.ones(3)})

    def test_format_layout(self, tmp_path):
        path = tmp_path / "z.ckpt"
        ckpt.save_tensors(path, {"ab": np.array([[1.5]])})
        data = path.read_bytes()
        assert data[:8] == b"SAILCKPT"
        assert int.from_bytes(data[8:12], "little") == 1
        assert int.from_bytes(data[12:16], "little") == 2  # name length
        assert data[16:18] == b"ab"
        assert int.from_bytes(data[18:22], "little") == 1  # rows
        assert int.from_bytes(data[22:26], "little") == 1  # cols
        assert np.frombuffer(data[26:34], dtype="<f8")[0] == 1.5
