import math
from fractions import Fraction

import numpy as np
import pytest

from ramsey_witness.config import PipelineConfig
from ramsey_witness.errors import InputError, PreconditionError, StageFailure
from ramsey_witness.graph import (VertexSet, complete_graph, cross_edges, degree_into, empty_graph,
                                  gnp_half, induced_edges, tuple_degree_into)
from ramsey_witness.pipeline import (
    FullReport, SwitchSchedule, WitnessSet, assemble_e, build_step2, certify_witnesses, dumps,
    ell_grid, gap_constant, run_full, run_per_l, sample_final_U, select_separated_indices,
    switching_sequence, trace_switching)

CFG = PipelineConfig()
N, ELL = 256, 26


@pytest.fixture(scope="module")
def g256():
    return gnp_half(N, 0)


@pytest.fixture(scope="module")
def step2(g256):
    return build_step2(g256, Fraction(1, 2), ELL, CFG)


@pytest.fixture(scope="module")
def per_l(g256):
    return run_per_l(g256, ELL, CFG)


class TestStep2:
    def test_structure_checks_out(self, g256, step2):
        assert step2.check(g256) == []
        assert step2.U0.size >= ELL // 2
        assert len(step2.M) >= max(2, CFG.mu_scale * math.sqrt(N))
        assert all(t.k == step2.k for t in step2.M)

    def test_discrepancy_recount(self, g256, step2):
        def weighted(w):
            return induced_edges(g256, w) + Fraction(1, 2) * cross_edges(g256, w, step2.U0)
        assert weighted(step2.W_plus) - weighted(step2.W_minus) == step2.discrepancy_value

    @pytest.mark.parametrize("graph", [empty_graph(N), complete_graph(N)])
    def test_homogeneous_graphs_fail_diversity(self, graph):
        with pytest.raises(StageFailure) as info:
            build_step2(graph, Fraction(1, 2), ELL, CFG.with_overrides(retry_limit=2))
        assert info.value.stage == "step2.diversity_anticoncentration"

    @pytest.mark.parametrize("alpha, ell", [(Fraction(1, 3), ELL), (Fraction(1, 2), 10),
                                            (Fraction(1, 2), 60)])
    def test_preconditions(self, g256, alpha, ell):
        with pytest.raises(PreconditionError):
            build_step2(g256, alpha, ell, CFG)


class TestSwitching:
    def test_endpoints_and_sizes(self, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 3)
        assert sched.w(0) == step2.W_minus and sched.w(sched.n_w) == step2.W_plus
        for i in range(sched.n_w + 1):
            assert sched.w(i).size == sched.n_w
        with pytest.raises(InputError):
            sched.w(sched.n_w + 1)

    def test_size_mismatch(self):
        with pytest.raises(InputError):
            switching_sequence(VertexSet.of(5, [0, 1]), VertexSet.of(5, [2]), 0)

    def test_trace_matches_recount(self, g256, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 11)
        trace = trace_switching(g256, sched, step2.U0, step2.M)
        rng = np.random.default_rng(0)
        for i in rng.choice(sched.n_w + 1, size=8, replace=False):
            w = sched.w(int(i))
            assert trace.e_w[i] == induced_edges(g256, w)
            assert trace.e_wu[i] == cross_edges(g256, w, step2.U0)
            assert [tuple_degree_into(g256, t, w) for t in step2.M] == trace.tuple_deg[:, i].tolist()

    def test_assemble_e_exact(self, g256, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 1)
        trace = trace_switching(g256, sched, step2.U0, step2.M)
        d = trace.tuple_deg[0]
        e = assemble_e(trace, d, Fraction(2, 3), 2)
        assert e[5] == trace.e_w[5] + Fraction(2, 3) * trace.e_wu[5] + 2 * d[5]


class TestSeparatedIndices:
    def test_linear_picks_every_index(self):
        n = 40
        sel = select_separated_indices([i * n for i in range(20)], n, CFG)
        assert sel.chosen == tuple(range(20))
        assert sel.kappa == 0.0

    def test_constant_fails(self):
        with pytest.raises(StageFailure, match="range"):
            select_separated_indices([7] * 10, 40, CFG)

    def test_decreasing_fails(self):
        with pytest.raises(StageFailure):
            select_separated_indices(list(range(100, 0, -1)), 40, CFG)

    def test_gaps(self):
        rng = np.random.default_rng(2)
        e = np.cumsum(rng.normal(5, 20, size=200)).tolist()
        sel = select_separated_indices(e, 40, CFG)
        assert sel.chosen[0] == 0 and sel.chosen[-1] == 199
        assert all(e[b] - e[a] >= sel.sigma for a, b in zip(sel.chosen, sel.chosen[1:]))


class TestFinalU:
    def test_zero_removed(self, g256, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 0)
        fu = sample_final_U(g256, step2.U0, 0, sched, CFG, 0)
        assert fu.D.size == 0 and fu.U == step2.U0 and fu.g_sum == 0.0

    def test_sizes_and_gap_recount(self, g256, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 0)
        n_d = step2.U0.size // 4
        fu = sample_final_U(g256, step2.U0, n_d, sched, CFG, 5)
        assert fu.D.size == n_d and fu.D1.size == 2 * n_d
        assert not (fu.D - fu.D1) and not (fu.D1 - step2.U0) and fu.U == step2.U0 - fu.D
        alpha = Fraction(step2.U0.size - n_d, step2.U0.size)
        i = 3
        plus, minus = sched.plus_order[i - 1], sched.minus_order[sched.n_w - i]
        deg = lambda v, s: degree_into(g256, v, s)
        want = (deg(plus, fu.U) - deg(minus, fu.U)) - alpha * (deg(plus, step2.U0)
                                                               - deg(minus, step2.U0))
        assert fu.g[i - 1] == pytest.approx(float(want))
        assert fu.g_sum <= fu.g_bound

    def test_too_many_removed(self, g256, step2):
        sched = switching_sequence(step2.W_minus, step2.W_plus, 0)
        with pytest.raises(PreconditionError):
            sample_final_U(g256, step2.U0, step2.U0.size, sched, CFG, 0)

    def test_gap_constant(self):
        assert gap_constant(100, 0) == 0.0
        q = gap_constant(200, 16)
        assert q > 0 and (q * 4) == int(q * 4)


class TestPerLevel:
    def test_succeeds_and_certifies(self, g256, per_l):
        assert per_l.ok, per_l.failure
        ws = per_l.witness_set
        assert certify_witnesses(g256, ws)
        assert all(s.size == ws.level for s, _ in ws.witnesses)
        assert per_l.report["witnesses"] == ws.distinct_edge_counts

    def test_frozen_output(self, per_l):
        # recorded from this implementation at the default config
        assert per_l.witness_set.level == 72
        assert per_l.witness_set.distinct_edge_counts == 39
        assert per_l.report["switching"]["chosen"] == [0, 10, 17, 26]

    def test_deterministic(self, g256, per_l):
        again = run_per_l(g256, ELL, CFG)
        assert dumps(again.witness_set.to_dict()) == dumps(per_l.witness_set.to_dict())
        assert dumps(again.report) == dumps(per_l.report)

    def test_larger_retry_budget_same_output(self, g256, per_l):
        more = run_per_l(g256, ELL, CFG.with_overrides(retry_limit=40))
        assert more.witness_set.to_dict() == per_l.witness_set.to_dict()

    def test_tampered_witness_is_caught(self, g256, per_l):
        ws = per_l.witness_set
        s, e = ws.witnesses[0]
        bad = WitnessSet(ws.level, [(s, e + 1)] + ws.witnesses[1:])
        cert = certify_witnesses(g256, bad)
        assert not cert and any("records" in p for p in cert.problems)
        dup = WitnessSet(ws.level, ws.witnesses + [ws.witnesses[0]])
        assert any("share" in p for p in certify_witnesses(g256, dup).problems)
        short = WitnessSet(ws.level, [(VertexSet.of(N, s.sorted()[1:]), induced_edges(
            g256, VertexSet.of(N, s.sorted()[1:])))])
        assert any("vertices" in p for p in certify_witnesses(g256, short).problems)

    def test_round_trip(self, per_l):
        ws = per_l.witness_set
        back = WitnessSet.from_dict(ws.to_dict(), N)
        assert back.to_dict() == ws.to_dict()

    def test_failure_returned_not_raised(self):
        res = run_per_l(complete_graph(N), ELL, CFG.with_overrides(retry_limit=2))
        assert not res.ok and res.witness_set is None
        assert res.failure["stage"] == "step2.diversity_anticoncentration"


class TestFullGrid:
    def test_grid(self):
        assert ell_grid(256, CFG) == [26, 30, 33, 37, 40, 44, 47, 51]
        assert ell_grid(256, CFG.with_overrides(ell_grid=1)) == [26]

    def test_single_level_matches_run_per_l(self, g256, per_l):
        full = run_full(g256, CFG, [ELL])
        assert full.results[0].witness_set.to_dict() == per_l.witness_set.to_dict()
        assert full.total_pairs == per_l.witness_set.distinct_edge_counts
        lines = full.to_csv().splitlines()
        assert lines[0] == "ell,ell_prime,witness_count,min_e,max_e"
        es = per_l.witness_set.edge_counts()
        assert lines[1] == f"26,72,39,{min(es)},{max(es)}"

    def test_failures_recorded(self):
        full = run_full(empty_graph(N), CFG.with_overrides(retry_limit=1), [26, 30])
        assert full.total_pairs == 0 and len(full.failures) == 2
        assert full.to_csv().splitlines()[1] == "26,,0,,"

    def test_threads_do_not_change_output(self, g256):
        one = run_full(g256, CFG, [26, 30])
        two = run_full(g256, CFG, [26, 30], threads=2)
        assert dumps(one.to_dict()) == dumps(two.to_dict())


def test_dumps_canonical():
    assert dumps({"b": 1, "a": [1]}) == '{\n  "a": [\n    1\n  ],\n  "b": 1\n}\n'
