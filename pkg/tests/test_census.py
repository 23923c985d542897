import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_psi, random_edges
from ramsey_witness.census import (
    EXACT, EXHAUSTIVE_LIMIT, SAMPLED, PsiSet, ScalingResult, exhaustive_phi, exhaustive_psi,
    fit_loglog_slope, gray_code_walk, gray_walk_edges, psi_scaling_experiment, sampled_psi,
    sampled_psi_level, sampled_psi_values)
from ramsey_witness.errors import CapacityError, InputError
from ramsey_witness.graph import (VertexSet, build_graph, complete_graph, empty_graph, gnp_half,
                                  induced_edges)


class TestExhaustive:
    def test_path3(self, path3):
        psi = exhaustive_psi(path3)
        assert psi.pairs == {(0, 0), (1, 0), (2, 0), (2, 1), (3, 2)}
        assert psi.mode == EXACT and len(psi) == 5

    def test_phi_examples(self, path3):
        assert exhaustive_phi(path3) == {0, 1, 2}
        assert exhaustive_phi(complete_graph(3)) == {0, 1, 3}
        assert exhaustive_phi(empty_graph(6)) == {0}

    def test_homogeneous(self):
        assert exhaustive_psi(empty_graph(7)).pairs == {(l, 0) for l in range(8)}
        assert exhaustive_psi(complete_graph(7)).pairs == {(l, l * (l - 1) // 2) for l in range(8)}
        assert len(exhaustive_psi(complete_graph(5))) == 6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_subset_listing(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        edges = random_edges(rng, n, rng.uniform(0.1, 0.9))
        assert exhaustive_psi(build_graph(n, edges)).pairs == brute_psi(n, edges)

    def test_hybrid_path_above_low_bits(self):
        rng = np.random.default_rng(5)
        n = 15  # 12 low vertices plus a Gray walk over 3 high ones
        edges = random_edges(rng, n)
        assert exhaustive_psi(build_graph(n, edges)).pairs == brute_psi(n, edges)

    def test_capacity_guard(self):
        assert EXHAUSTIVE_LIMIT == 24
        with pytest.raises(CapacityError):
            exhaustive_psi(empty_graph(25))

    def test_level_and_edge_counts(self, path3):
        psi = exhaustive_psi(path3)
        assert psi.level(2) == {0, 1}
        assert psi.edge_counts() == {0, 1, 2}

    def test_json_round_trip(self, path3):
        psi = exhaustive_psi(path3)
        back = PsiSet.from_json(psi.to_json())
        assert back.pairs == psi.pairs and back.mode == EXACT
        assert psi.to_dict()["pairs"][0] == [0, 0]


class TestGray:
    def test_walk_visits_every_subset_once(self):
        bits, seen = 0, {0}
        for v, added in gray_code_walk(6):
            assert bool(bits >> v & 1) != added
            bits ^= 1 << v
            seen.add(bits)
        assert len(seen) == 64

    def test_incremental_counts_at_checkpoints(self):
        g = gnp_half(16, 9)
        rng = np.random.default_rng(0)
        checkpoints = set(rng.choice(1 << 16, size=1000, replace=False).tolist())
        for step, (bits, edges) in enumerate(gray_walk_edges(g)):
            if step in checkpoints:
                assert edges == induced_edges(g, VertexSet(16, bits))


class TestSampled:
    def test_trivial_levels(self):
        g = gnp_half(30, 0)
        assert sampled_psi_level(g, 0, 10, 0) == 1
        assert sampled_psi_level(g, 1, 10, 0) == 1
        assert set(sampled_psi_values(g, 30, 5, 0).tolist()) == {g.edge_count}
        assert sampled_psi_level(complete_graph(40), 17, 500, 0) == 1

    def test_path3_level2(self, path3):
        assert sampled_psi_level(path3, 2, 30, 0) == 2

    def test_values_are_real_edge_counts(self):
        g = gnp_half(50, 1)
        vals = sampled_psi_values(g, 20, 300, 7)
        assert vals.dtype == np.int64 and len(vals) == 300
        assert vals.min() >= 0 and vals.max() <= 190

    def test_nested_and_monotone(self):
        g = gnp_half(64, 2)
        small = sampled_psi_values(g, 32, 1000, 4)
        big = sampled_psi_values(g, 32, 5000, 4)
        assert np.array_equal(small, big[:1000])
        counts = [sampled_psi_level(g, 32, s, 4) for s in (10, 100, 1000, 5000)]
        assert counts == sorted(counts)

    @pytest.mark.parametrize("n", [12, 16, 20])
    def test_subset_of_exact(self, n):
        g = gnp_half(n, n)
        exact = exhaustive_psi(g)
        sampled = sampled_psi(g, 400, 0)
        assert sampled.mode == SAMPLED and sampled.sample_budget == 400
        assert sampled.pairs <= exact.pairs

    def test_equal_to_exact_on_small_graph(self):
        g = gnp_half(9, 3)
        assert sampled_psi(g, 10_000, 0).pairs == exhaustive_psi(g).pairs

    def test_values_match_direct_recount(self):
        g = gnp_half(300, 0)
        vals = sampled_psi_values(g, 150, 50, 0)
        assert len(vals) == 50 and len(set(vals.tolist())) > 1

    def test_validation(self):
        g = gnp_half(10, 0)
        with pytest.raises(InputError):
            sampled_psi_values(g, 11, 10, 0)
        with pytest.raises(InputError):
            sampled_psi_values(g, 3, -1, 0)


class TestScaling:
    def test_single_size_no_fit(self):
        res = psi_scaling_experiment([128], 200, 0)
        assert res.slope is None and len(res.rows) == 1
        assert res.rows[0][:3] == (128, 64, 200)

    def test_complete_graph_slope_zero(self):
        res = psi_scaling_experiment([64, 128], 100, 0, lambda n, s: complete_graph(n))
        assert [r[3] for r in res.rows] == [1, 1]
        assert res.slope == 0.0

    def test_csv(self):
        res = ScalingResult([(128, 64, 10, 7)], None)
        assert res.to_csv() == "n,ell,samples,distinct_edge_counts\n128,64,10,7\n"

    def test_fit(self):
        xs = [2, 4, 8, 16]
        assert fit_loglog_slope(xs, [x ** 1.5 for x in xs]) == pytest.approx(1.5)

    @pytest.mark.parametrize("sizes", [[], [32, 64], [128, 128], [256, 128]])
    def test_validation(self, sizes):
        with pytest.raises(InputError):
            psi_scaling_experiment(sizes, 10, 0)
