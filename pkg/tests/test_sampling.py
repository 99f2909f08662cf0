import numpy as np
import pytest

from conftest import graph_from_edges, make_random_graph
from sail import rng
from sail.samplers import (sample_eval_negatives, sample_pseudo_local,
                           sample_triples)


def edge_set(g):
    return {(int(u), int(v)) for u, v in g.undirected_edges()} | \
           {(int(v), int(u)) for u, v in g.undirected_edges()}


class TestTriples:
    def test_invariants_on_random_graph(self):
        g = make_random_graph(0, n=50, p=0.12)
        k = 3
        triples = sample_triples(g, k, rng.stream(0, "triples", 1))
        assert triples.shape == (g.num_incidences * k, 3)
        edges = edge_set(g)
        for i, j, neg in triples:
            assert (int(i), int(j)) in edges
            assert (int(i), int(neg)) not in edges
            assert int(i) != int(neg)

    def test_both_orientations_counted(self):
        g = graph_from_edges(4, [(0, 1), (2, 3)])
        triples = sample_triples(g, 5, rng.stream(1, "triples", 1))
        anchors = triples[:, 0]
        for node in range(4):
            assert (anchors == node).sum() == 5

    def test_complete_graph_warns_and_empty(self):
        g = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.warns(UserWarning, match="no valid negative"):
            triples = sample_triples(g, 2, rng.stream(2, "triples", 1))
        assert triples.shape == (0, 3)

    def test_forced_negative(self):
        g = graph_from_edges(3, [(0, 1)])  # node 2 isolated
        triples = sample_triples(g, 1, rng.stream(3, "triples", 1))
        assert np.all(triples[:, 2] == 2)

    def test_seed_determinism_and_epoch_variation(self):
        g = make_random_graph(4, n=20, p=0.2)
        a = sample_triples(g, 2, rng.stream(9, "triples", 5))
        b = sample_triples(g, 2, rng.stream(9, "triples", 5))
        c = sample_triples(g, 2, rng.stream(9, "triples", 6))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_k_must_be_positive(self):
        g = graph_from_edges(3, [(0, 1)])
        with pytest.raises(ValueError):
            sample_triples(g, 0, rng.stream(0, "triples", 1))


class TestPseudoLocal:
    def test_forced_members(self):
        sets = sample_pseudo_local(3, 2, rng.stream(0, "pseudo", 1))
        for i in range(3):
            assert sorted(sets[i].tolist()) == sorted(set(range(3)) - {i})

    def test_reproducible(self):
        a = sample_pseudo_local(100, 10, rng.stream(1, "pseudo", 3))
        b = sample_pseudo_local(100, 10, rng.stream(1, "pseudo", 3))
        np.testing.assert_array_equal(a, b)

    def test_members_distinct_and_exclude_center(self):
        for seed in range(5):
            sets = sample_pseudo_local(37, 9, rng.stream(seed, "pseudo", 1))
            for i in range(37):
                row = sets[i]
                assert len(set(row.tolist())) == 9
                assert i not in row
                assert row.min() >= 0 and row.max() < 37

    def test_membership_frequency_uniform(self):
        # empirical inclusion rate of each candidate ~ d/(n-1) within 3 sigma
        n, d, trials = 12, 3, 10_000
        counts = np.zeros((n, n))
        for t in range(trials):
            sets = sample_pseudo_local(n, d, rng.stream(7, "pseudo", t))
            for i in range(n):
                counts[i, sets[i]] += 1
        p = d / (n - 1)
        sigma = np.sqrt(p * (1 - p) / trials)
        freq = counts / trials
        for i in range(n):
            others = np.delete(freq[i], i)
            assert np.all(np.abs(others - p) < 3.5 * sigma), (i, others)
            assert freq[i, i] == 0

    def test_d_out_of_range(self):
        with pytest.raises(ValueError):
            sample_pseudo_local(5, 5, rng.stream(0, "pseudo", 1))
        with pytest.raises(ValueError):
            sample_pseudo_local(5, 0, rng.stream(0, "pseudo", 1))

    def test_full_complement_smallest_case(self):
        sets = sample_pseudo_local(2, 1, rng.stream(2, "pseudo", 1))
        assert sets[0, 0] == 1 and sets[1, 0] == 0


class TestEvalNegatives:
    def test_forced_pairs(self):
        g = graph_from_edges(3, [(0, 1)])
        pairs = sample_eval_negatives(g, 2, rng.stream(0, "neg", 1))
        assert {tuple(p) for p in pairs.tolist()} == {(0, 2), (1, 2)}

    def test_empty_request(self):
        g = graph_from_edges(3, [(0, 1)])
        assert sample_eval_negatives(g, 0, rng.stream(1, "neg", 1)).shape == (0, 2)

    def test_all_non_adjacent_and_unique(self):
        g = make_random_graph(5, n=50, p=0.08)
        pairs = sample_eval_negatives(g, 100, rng.stream(2, "neg", 1))
        assert pairs.shape == (100, 2)
        edges = edge_set(g)
        seen = set()
        for u, v in pairs.tolist():
            assert u < v
            assert (u, v) not in edges
            assert (u, v) not in seen
            seen.add((u, v))

    def test_insufficient_non_edges(self):
        g = graph_from_edges(3, [(0, 1), (1, 2)])  # only one non-edge
        with pytest.raises(ValueError, match="non-edges"):
            sample_eval_negatives(g, 2, rng.stream(3, "neg", 1))

    def test_deterministic(self):
        g = make_random_graph(6, n=30, p=0.1)
        a = sample_eval_negatives(g, 40, rng.stream(4, "neg", 1))
        b = sample_eval_negatives(g, 40, rng.stream(4, "neg", 1))
        np.testing.assert_array_equal(a, b)
