import numpy as np
import pytest

from conftest import dense_adjacency, dense_norm_adj_oracle, make_random_graph
from sail import rng
from sail.encoder import (Params, Views, copy_to_teacher, fade_student,
                          feature_matrix, forward, init_params)
from sail.graph import Graph, normalized_adjacency
from sail.numerics import glorot_limit, glorot_uniform


class TestForward:
    def test_identity_weights_edgeless_graph(self):
        x = np.abs(np.random.Generator(np.random.Philox(key=0)).normal(size=(4, 4)))
        g = Graph.build(4, [], x)
        adj = normalized_adjacency(g)
        views = forward(Params(w=np.eye(4)), g, adj, "relu")
        np.testing.assert_allclose(views.low, x, rtol=1e-6)
        np.testing.assert_allclose(views.smoothed, x, rtol=1e-6)

    def test_triangle_identical_features_identical_rows(self):
        g = Graph.build(3, [(0, 1), (1, 2), (0, 2)], np.ones((3, 4)))
        params = init_params(4, 6, rng.stream(0, "init"))
        views = forward(params, g, normalized_adjacency(g))
        np.testing.assert_allclose(views.smoothed[0], views.smoothed[1])
        np.testing.assert_allclose(views.smoothed[0], views.smoothed[2])

    @pytest.mark.parametrize("act", ["relu", "tanh"])
    def test_matches_dense_oracle(self, act):
        g = make_random_graph(1, n=10, p=0.3, feat_dim=5)
        params = init_params(5, 4, rng.stream(2, "init"))
        views = forward(params, g, normalized_adjacency(g), act)
        dense = dense_norm_adj_oracle(dense_adjacency(g))
        x = np.asarray(g.features, dtype=np.float64)
        pre = dense @ dense @ (x @ params.w)
        expected = np.maximum(pre, 0) if act == "relu" else np.tanh(pre)
        np.testing.assert_allclose(views.smoothed, expected, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(views.low, x @ params.w, rtol=1e-12)

    def test_relu_output_nonnegative(self):
        g = make_random_graph(3, n=12, p=0.3)
        params = init_params(g.num_features, 8, rng.stream(3, "init"))
        views = forward(params, g, normalized_adjacency(g), "relu")
        assert views.smoothed.min() >= 0.0

    def test_permutation_equivariance(self):
        g = make_random_graph(4, n=11, p=0.3, feat_dim=6)
        params = init_params(6, 5, rng.stream(4, "init"))
        out = forward(params, g, normalized_adjacency(g)).smoothed
        perm = np.random.Generator(np.random.Philox(key=5)).permutation(g.n)
        inv = np.argsort(perm)
        g2 = Graph.build(g.n, [(inv[u], inv[v]) for u, v in g.undirected_edges()],
                         g.features[perm])
        out2 = forward(params, g2, normalized_adjacency(g2)).smoothed
        np.testing.assert_allclose(out2, out[perm], rtol=1e-9, atol=1e-12)

    def test_shape_mismatch(self):
        g = make_random_graph(5, n=6, feat_dim=4)
        with pytest.raises(ValueError):
            forward(Params(w=np.zeros((3, 2))), g, normalized_adjacency(g))

    def test_row_normalized_features(self):
        g = Graph.build(2, [(0, 1)], np.array([[2.0, 2.0], [0.0, 0.0]]))
        x = feature_matrix(g, row_normalize=True)
        np.testing.assert_allclose(x[0], [0.5, 0.5])
        np.testing.assert_allclose(x[1], [0.0, 0.0])  # zero row stays zero


class TestTeacherLifecycle:
    def test_copy_isolated_from_fade(self):
        student = init_params(5, 3, rng.stream(6, "init"))
        teacher = copy_to_teacher(student)
        faded = fade_student(student, 0.3, rng.stream(6, "fade", 1))
        np.testing.assert_array_equal(teacher.w, student.w)
        assert not np.array_equal(faded.w, student.w)

    def test_copy_forward_bitwise_equal(self):
        g = make_random_graph(7, n=9)
        adj = normalized_adjacency(g)
        student = init_params(g.num_features, 4, rng.stream(7, "init"))
        teacher = copy_to_teacher(student)
        a = forward(student, g, adj).smoothed
        b = forward(teacher, g, adj).smoothed
        np.testing.assert_array_equal(a, b)

    def test_successive_copies_identical(self):
        student = init_params(4, 4, rng.stream(8, "init"))
        np.testing.assert_array_equal(copy_to_teacher(student).w,
                                      copy_to_teacher(student).w)

    def test_mutating_student_leaves_teacher(self):
        student = init_params(4, 4, rng.stream(9, "init"))
        teacher = copy_to_teacher(student)
        before = teacher.w.copy()
        student.w += 1.0
        np.testing.assert_array_equal(teacher.w, before)


class TestFade:
    def test_w1_identity(self):
        p = init_params(6, 4, rng.stream(10, "init"))
        faded = fade_student(p, 1.0, rng.stream(10, "fade", 1))
        np.testing.assert_array_equal(faded.w, p.w)

    def test_w0_fresh_init_sample(self):
        p = init_params(6, 4, rng.stream(11, "init"))
        faded = fade_student(p, 0.0, rng.stream(11, "fade", 1))
        expected = glorot_uniform(6, 4, rng.stream(11, "fade", 1))
        np.testing.assert_array_equal(faded.w, expected)
        assert not np.array_equal(faded.w, p.w)
        assert np.all(np.abs(faded.w) <= glorot_limit(6, 4))

    def test_w_half_exact_convex_combination(self):
        p = init_params(6, 4, rng.stream(12, "init"))
        noise = glorot_uniform(6, 4, rng.stream(12, "fade", 5))
        faded = fade_student(p, 0.5, rng.stream(12, "fade", 5))
        np.testing.assert_array_equal(faded.w, 0.5 * p.w + 0.5 * noise)
        again = fade_student(p, 0.5, rng.stream(12, "fade", 5))
        np.testing.assert_array_equal(faded.w, again.w)

    @pytest.mark.parametrize("w", [-0.1, 1.1])
    def test_rejects_out_of_range(self, w):
        p = init_params(3, 3, rng.stream(13, "init"))
        with pytest.raises(ValueError):
            fade_student(p, w, rng.stream(13, "fade", 1))


def test_views_carries_both_representations():
    g = make_random_graph(14, n=8)
    params = init_params(g.num_features, 3, rng.stream(14, "init"))
    views = forward(params, g, normalized_adjacency(g))
    assert isinstance(views, Views)
    assert views.low.shape == views.smoothed.shape == (8, 3)
