import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import random_edges
from ramsey_witness.errors import InputError, PreconditionError
from ramsey_witness.graph import VertexSet, build_graph, complete_graph, empty_graph
from ramsey_witness.lemmas import (
    Hypergraph, ParticleSystem, Sunflower, greedy_separated_subsequence, hypergraph_from_text,
    hypergraph_to_text, is_independent, lonely_mask, lonely_mask_bruteforce, neighbour_counts,
    never_lonely_particle, never_lonely_runs, pigeonhole_bucket, sunflower_bound,
    sunflower_extract, turan_bound, turan_independent_set, well_separated_bound,
    well_separated_subsequence)


def max_independent_size(n, edges):
    adj = {(u, v) for u, v in edges} | {(v, u) for u, v in edges}
    for r in range(n, 0, -1):
        for combo in itertools.combinations(range(n), r):
            if all((a, b) not in adj for a, b in itertools.combinations(combo, 2)):
                return r
    return 0


class TestTuran:
    def test_edgeless(self):
        assert turan_independent_set(empty_graph(7)).size == 7

    def test_complete(self):
        assert turan_independent_set(complete_graph(7)).size == 1

    def test_cycle5(self, cycle5):
        s = turan_independent_set(cycle5)
        assert s.size == 2 == math.ceil(turan_bound(cycle5))
        assert is_independent(cycle5, s)
        assert max_independent_size(5, [(i, (i + 1) % 5) for i in range(5)]) == 2

    def test_lowest_id_tie_break(self):
        # path 0-1-2-3: vertices 0 and 3 have degree 1; 0 is taken first
        s = turan_independent_set(build_graph(4, [(0, 1), (1, 2), (2, 3)]))
        assert s.sorted() == [0, 2]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bound_and_optimum(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        edges = random_edges(rng, n, rng.uniform(0.1, 0.9))
        g = build_graph(n, edges)
        s = turan_independent_set(g)
        assert is_independent(g, s)
        assert math.ceil(turan_bound(g)) <= s.size <= max_independent_size(n, edges)


class TestSunflower:
    def test_bound_values(self):
        assert sunflower_bound(0, 2) == 0
        assert sunflower_bound(1, 3) == 1
        assert sunflower_bound(16, 2) == 2  # (2*2)^2 = 16
        assert sunflower_bound(15, 2) == 1
        assert sunflower_bound(10_000, 4) == 2  # floor(10 / 4)

    def test_singletons(self):
        h = Hypergraph.of(1, [[v] for v in range(9)])
        f = sunflower_extract(h)
        assert f.kernel == frozenset() and len(f.petals) == 9

    def test_star(self):
        h = Hypergraph.of(2, [[0, v] for v in range(1, 8)])
        f = sunflower_extract(h)
        assert f.kernel == frozenset({0})
        assert sorted(min(p) for p in f.petals) == list(range(1, 8))

    def test_perfect_matching(self):
        h = Hypergraph.of(2, [[2 * i, 2 * i + 1] for i in range(6)])
        f = sunflower_extract(h)
        assert f.kernel == frozenset() and len(f.petals) == 6

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            sunflower_extract(Hypergraph.of(2, []))

    def test_uniformity_checked(self):
        with pytest.raises(InputError):
            Hypergraph.of(2, [[1, 2, 3]])

    def test_validity_helper(self):
        assert not Sunflower(frozenset({0}), (frozenset({0, 1}),)).is_valid()
        assert not Sunflower(frozenset(), (frozenset({1}), frozenset({1, 2}))).is_valid()

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 4), st.lists(st.lists(st.integers(0, 9), min_size=4, max_size=4),
                                        min_size=1, max_size=80))
    def test_random_hypergraphs(self, k, rows):
        edges = [sorted(set(r))[:k] for r in rows]
        edges = [e for e in edges if len(e) == k]
        assume(edges)
        h = Hypergraph.of(k, edges)
        f = sunflower_extract(h)
        assert f.is_valid()
        assert set(f.edges()) <= set(h.edges)
        full = f.edges()
        assert all(a & b == f.kernel for a, b in itertools.combinations(full, 2))
        assert len(f.petals) >= sunflower_bound(h.m, k)

    def test_text_round_trip(self):
        h = Hypergraph.of(3, [[0, 1, 2], [2, 3, 4]])
        assert hypergraph_from_text(hypergraph_to_text(h)) == h
        with pytest.raises(InputError):
            hypergraph_from_text("3 2\n0 1 2\n")


class TestWellSeparated:
    def test_documented_example(self):
        out = well_separated_subsequence([0, 3, 6, 9, 12], 3, 3)
        p = [0, 3, 6, 9, 12]
        assert out.indices[0] == 0 and out.indices[-1] == 4
        assert len(out.indices) >= 2
        assert all(p[b] - p[a] >= 3 for a, b in zip(out.indices, out.indices[1:]))
        assert out.indices == (0, 2, 4)

    def test_uniform_steps_take_every_other_index(self):
        p = [3 * i for i in range(11)]
        assert well_separated_subsequence(p, 3, 3).indices == (0, 2, 4, 6, 8, 10)

    def test_constant_sequence_is_degenerate(self):
        out = well_separated_subsequence([5, 5, 5, 5], 2, 1)
        assert out.degenerate and out.indices == (0, 3)
        assert well_separated_subsequence([5], 2, 1).indices == (0,)

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            well_separated_subsequence([0, 1, 2], 1, 2)
        with pytest.raises(PreconditionError):
            well_separated_subsequence([3, 1, 0], 2, 1)
        with pytest.raises(PreconditionError):
            well_separated_subsequence([0, 1], 2, 0)

    def test_bound_formula(self):
        # lambda = 10, one jump of 6 > rho = 4
        assert well_separated_bound([0, 2, 8, 10], 4, 1) == pytest.approx(10 / 5 - 6 / 4)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-3, 6, allow_nan=False), min_size=1, max_size=60),
           st.floats(0.5, 5), st.floats(0.05, 1.0))
    def test_postconditions(self, steps, rho, frac):
        sigma = rho * frac
        p = [0.0]
        for s in steps:
            p.append(p[-1] + s)
        assume(p[-1] >= p[0])
        for out in (well_separated_subsequence(p, rho, sigma),
                    greedy_separated_subsequence(p, sigma)):
            idx = out.indices
            assert idx[0] == 0 and idx[-1] == len(p) - 1
            assert all(a < b for a, b in zip(idx, idx[1:]))
            if p[-1] - p[0] >= sigma:
                assert not out.degenerate
                assert all(p[b] - p[a] >= sigma for a, b in zip(idx, idx[1:]))
            else:
                assert out.degenerate
        walk = well_separated_subsequence(p, rho, sigma)
        if not walk.degenerate:
            assert len(walk.indices) >= well_separated_bound(p, rho, sigma)

    def test_greedy_takes_every_index_on_linear_input(self):
        p = [10 * i for i in range(8)]
        assert greedy_separated_subsequence(p, 10).indices == tuple(range(8))


def _system(pos, rho, sigma, mu, lam):
    return ParticleSystem(np.asarray(pos), rho, sigma, mu, lam)


class TestLonely:
    def test_stationary_cluster(self):
        ps = _system(np.full((10, 6), 4), 1, 7, 10, 1)
        assert never_lonely_particle(ps) == 0

    def test_mu_one_counts_self(self):
        rng = np.random.default_rng(0)
        pos = np.cumsum(rng.integers(-1, 2, size=(30, 5)), axis=1) + 50
        ps = _system(pos, 1, 11, 1, 100)
        a = never_lonely_particle(ps)
        assert not lonely_mask_bruteforce(ps)[a].any()

    def test_two_stationary_clusters(self):
        pos = np.vstack([np.full((50, 3), 0), np.full((50, 3), 40)])
        ps = _system(pos, 1, 18, 50, 40)  # sigma below the cluster gap
        a = never_lonely_particle(ps)
        assert not lonely_mask_bruteforce(ps)[a].any()
        assert not lonely_mask(ps).any()

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            never_lonely_particle(_system([[0, 5]], 1, 2, 1, 10))  # speed
        with pytest.raises(PreconditionError):
            never_lonely_particle(_system([[0], [30]], 1, 2, 1, 10))  # span
        with pytest.raises(PreconditionError):
            never_lonely_particle(_system(np.zeros((2, 50)), 1, 1, 2, 10))  # horizon
        with pytest.raises(InputError):
            _system(np.zeros((0, 3)), 1, 1, 1, 1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_mask_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        pos = np.cumsum(rng.integers(-2, 3, size=(int(rng.integers(1, 40)), 8)), axis=1)
        ps = _system(pos, 2, float(rng.integers(1, 6)), int(rng.integers(1, 6)), 100)
        assert np.array_equal(lonely_mask(ps), lonely_mask_bruteforce(ps))

    def test_neighbour_counts(self):
        assert neighbour_counts(np.array([0, 1, 5]), 1).tolist() == [2, 2, 1]

    def test_runs_cover_all_times(self):
        # particle 0 leaves the crowd half way; particle 1 stays
        pos = np.zeros((4, 6), dtype=int)
        pos[0, 3:] = 20
        ps = _system(pos, 20, 1, 2, 30)
        runs = never_lonely_runs(ps)
        assert runs[0][1] == 0 and runs[-1][2] == 6
        assert all(a[2] == b[1] for a, b in zip(runs, runs[1:]))
        lonely = lonely_mask_bruteforce(ps)
        assert all(not lonely[p, s:e].any() for p, s, e in runs)

    def test_runs_fail_when_everyone_is_lonely(self):
        with pytest.raises(PreconditionError):
            never_lonely_runs(_system([[0], [10]], 1, 1, 2, 10))


class TestPigeonhole:
    def test_counting(self):
        assert pigeonhole_bucket([1, 1, 2], lambda x: x) == (1, [1, 1])

    def test_all_equal_and_all_distinct(self):
        assert pigeonhole_bucket("aaa", lambda x: x)[1] == ["a", "a", "a"]
        key, bucket = pigeonhole_bucket([3, 1, 2], lambda x: x)
        assert key == 3 and bucket == [3]

    def test_empty(self):
        with pytest.raises(InputError):
            pigeonhole_bucket([], lambda x: x)

    @given(st.lists(st.integers(0, 5), min_size=1))
    def test_bucket_is_large(self, items):
        _, bucket = pigeonhole_bucket(items, lambda x: x)
        assert len(bucket) * len(set(items)) >= len(items)
