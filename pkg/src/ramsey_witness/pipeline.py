"""Randomized construction of many induced subgraphs with equal size and distinct edge counts.

Stages, in order:

* ``build_step2``: sets ``W-, W+, U0`` with a large weighted edge discrepancy and a
  matching ``M`` of k-tuples with identical degrees into all three sets and
  pairwise different neighbourhoods inside ``U0``.
* ``switching_sequence`` / ``track_matching_degrees``: morph ``W-`` into ``W+`` one
  vertex at a time while following a crowd of matching tuples whose degree
  into the current set stays close together.
* ``select_separated_indices``: pick switching times whose weighted edge
  counts are far apart.
* ``sample_final_U`` / ``sub_random_augment``: delete a random ``D`` from ``U0``
  and, at each chosen time, add a few matching tuples in many ways.

Every probabilistic claim is an audit with a retry budget; running out of
budget raises :class:`StageFailure` naming the audit.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .config import PipelineConfig
from .errors import InputError, PreconditionError, StageFailure
from .graph import (Graph, KTuple, VertexSet, cross_edges, induced_edges, pairwise_mismatch,
                    tuple_degree_into, tuple_mult_vectors)
from .hypergeom import concentration_bound
from .lemmas import (ParticleSystem, SeparatedSubsequence, greedy_separated_subsequence,
                     never_lonely_particle, never_lonely_runs, turan_independent_set,
                     well_separated_subsequence, Hypergraph, sunflower_extract)
from .richness import RichnessParams, diversity_violation_scan, find_rich_subgraph
from .rng import stream
from .tracker import SwitchTracker

log = logging.getLogger(__name__)

# Fixed budget for resampling half of U1 inside one step-2 attempt.  It does not
# follow retry_limit, so raising retry_limit never changes which attempt wins.
HALVING_ATTEMPTS = 20


# --- small helpers ----------------------------------------------------------


def _subset(n: int, pool: Sequence[int], size: int, rng: np.random.Generator) -> VertexSet:
    pool = np.asarray(pool, dtype=np.int64)
    if size > len(pool):
        raise InputError(f"cannot draw {size} vertices from {len(pool)}")
    return VertexSet.of(n, pool[rng.permutation(len(pool))[:size]].tolist())


def _child(seed, *names) -> np.random.Generator:
    """Named stream under ``seed``, which is an int or a tuple ``(int, *names)``."""
    if isinstance(seed, tuple):
        return stream(seed[0], *seed[1:], *names)
    return stream(seed, *names)


def _degrees(g: Graph, s: VertexSet) -> np.ndarray:
    """``d_S(v)`` for every vertex, via one dense mat-vec."""
    return g.matrix.astype(np.int32) @ s.indicator().astype(np.int32)


def _tuple_sums(vec: np.ndarray, tuples: Sequence[KTuple]) -> np.ndarray:
    if not tuples:
        return np.zeros(0, dtype=np.int64)
    idx = np.asarray([t.vertices for t in tuples], dtype=np.int64)
    return vec[idx].sum(axis=1).astype(np.int64)


def _union(n: int, tuples: Sequence[KTuple]) -> VertexSet:
    bits = 0
    for t in tuples:
        bits |= t.mask()
    return VertexSet(n, bits)


def _clamp_alpha(ell: int, f: int) -> Fraction:
    alpha = Fraction(ell - f, ell)
    return min(Fraction(1), max(Fraction(1, 2), alpha))


def _retrying(cfg: PipelineConfig, stage: str, attempt_fn: Callable[[int], object]):
    """Call ``attempt_fn(attempt)`` until it returns non-None; raise after the budget."""
    last = None
    for attempt in range(cfg.retry_limit):
        try:
            out = attempt_fn(attempt)
        except StageFailure as exc:
            last = exc
            continue
        if out is not None:
            return out, attempt + 1
    if last is not None:
        raise StageFailure(last.stage, f"gave up after {cfg.retry_limit} attempts: {last}",
                           cfg.retry_limit, last.detail)
    raise StageFailure(stage, f"gave up after {cfg.retry_limit} attempts", cfg.retry_limit)


# --- step 2 -----------------------------------------------------------------


@dataclass
class Step2Output:
    W_minus: VertexSet
    W_plus: VertexSet
    U0: VertexSet
    A: VertexSet
    M: list[KTuple]
    k: int
    d_Wm: int
    d_Wp: int
    d_U0: int
    discrepancy_value: Fraction
    diversity_threshold: float
    info: dict = field(default_factory=dict)

    def check(self, g: Graph) -> list[str]:
        """Recount the structural properties; returns a list of problems."""
        problems = []
        sets = [self.W_minus, self.W_plus, self.U0, self.A]
        for i in range(4):
            for j in range(i + 1, 4):
                if not sets[i].isdisjoint(sets[j]):
                    problems.append(f"sets {i} and {j} overlap")
        if self.W_minus.size != self.W_plus.size:
            problems.append("|W-| != |W+|")
        if _union(g.n, self.M) != self.A:
            problems.append("A is not covered exactly by M")
        for t in self.M:
            got = (tuple_degree_into(g, t, self.W_minus), tuple_degree_into(g, t, self.W_plus),
                   tuple_degree_into(g, t, self.U0))
            if got != (self.d_Wm, self.d_Wp, self.d_U0):
                problems.append(f"tuple {t.vertices} has degrees {got}")
        if diversity_violation_scan(g, self.U0, self.M, self.diversity_threshold):
            problems.append("diversity threshold violated")
        if not self.discrepancy_value > 0:
            problems.append("discrepancy is not positive")
        return problems


def rich_vertex_set(g: Graph, cfg: PipelineConfig) -> tuple[VertexSet, dict]:
    """Vertex set to work in: a subgraph passing the sampled richness audit, else all of V."""
    params = RichnessParams(cfg.delta_rich, cfg.eps)
    found = find_rich_subgraph(g, params, cfg.rich_min_frac, cfg.rich_attempts,
                               stream(cfg.seed, "step2", "richness"), cfg.rich_samples)
    info = {"rich": found.found, "rich_report": found.best_report.to_dict(),
            "rich_attempts": found.attempts}
    if found.found:
        return found.vertices, info
    log.warning("no rich subgraph found (worst violators %d); using all vertices",
                found.best_report.worst_violators)
    return VertexSet.full(g.n), info


class _Neighbourhoods:
    """Dense helpers for neighbourhood differences inside the working set ``V'``."""

    def __init__(self, g: Graph, vprime: VertexSet):
        self.g = g
        self.verts = np.asarray(vprime.sorted(), dtype=np.int64)
        self.sub = g.matrix[np.ix_(self.verts, self.verts)].astype(np.float32)
        deg = self.sub.sum(axis=1)
        self.full_mismatch = deg[:, None] + deg[None, :] - 2 * (self.sub @ self.sub.T)

    def mismatch_into(self, cols: np.ndarray) -> np.ndarray:
        part = self.sub[:, cols]
        deg = part.sum(axis=1)
        return deg[:, None] + deg[None, :] - 2 * (part @ part.T)

    def positions(self, s: VertexSet) -> np.ndarray:
        return np.flatnonzero(s.indicator()[self.verts])


def _audit_pairs_kept(nb: _Neighbourhoods, cols: np.ndarray, thr_full: float,
                      thr_sub: float) -> tuple[bool, int]:
    diverse = nb.full_mismatch >= thr_full
    sub = nb.mismatch_into(cols)
    bad = diverse & (sub < thr_sub)
    np.fill_diagonal(bad, False)
    return not bad.any(), int(bad.sum()) // 2


def _audit_tuple_pairs(g: Graph, nb: _Neighbourhoods, u: VertexSet, cfg: PipelineConfig,
                       thr_sub: float, rng: np.random.Generator) -> tuple[bool, int]:
    """Random disjoint tuple pairs (sizes 2..K) that are diverse in V' stay diverse in ``u``."""
    verts = nb.verts
    vp = VertexSet.of(g.n, verts.tolist())
    thr_full = cfg.diversity_frac * len(verts)
    failures = 0
    for _ in range(cfg.tuple_audit_pairs):
        k = int(rng.integers(2, cfg.K + 1))
        if 2 * k > len(verts):
            break
        pick = verts[rng.permutation(len(verts))[:2 * k]].tolist()
        x, y = KTuple.of(pick[:k]), KTuple.of(pick[k:])
        full = pairwise_mismatch(tuple_mult_vectors(g, [x, y], vp))[0, 1]
        if full >= thr_full:
            part = pairwise_mismatch(tuple_mult_vectors(g, [x, y], u))[0, 1]
            failures += part < thr_sub
    return failures == 0, failures


def _weighted(g: Graph, w: VertexSet, u: VertexSet, alpha: Fraction) -> Fraction:
    return induced_edges(g, w) + alpha * cross_edges(g, w, u)


def _packed_rows(g: Graph, within: VertexSet) -> np.ndarray:
    m = g.matrix * within.indicator()[None, :].astype(np.uint8)
    packed = np.packbits(m, axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    return packed.view(np.uint64)


def _sample_k_subsets(pool: np.ndarray, K: int, budget: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Distinct sorted K-subsets of ``pool`` drawn uniformly (duplicates rejected)."""
    rows = []
    left = budget
    while left > 0:
        chunk = min(left, 1 << 18)
        draw = np.sort(rng.integers(0, len(pool), size=(chunk, K)), axis=1)
        ok = np.all(np.diff(draw, axis=1) > 0, axis=1)
        rows.append(draw[ok])
        left -= chunk
    idx = np.unique(np.concatenate(rows), axis=0)
    return pool[idx]


def _common_nbhd_sizes(packed: np.ndarray, tuples: np.ndarray) -> np.ndarray:
    out = np.empty(len(tuples), dtype=np.int64)
    for s in range(0, len(tuples), 1 << 16):
        block = tuples[s:s + (1 << 16)]
        acc = packed[block[:, 0]].copy()
        for j in range(1, block.shape[1]):
            acc &= packed[block[:, j]]
        out[s:s + len(block)] = np.bitwise_count(acc).sum(axis=1)
    return out


def build_step2(g: Graph, alpha, ell: int, cfg: PipelineConfig,
                vprime: VertexSet | None = None) -> Step2Output:
    """Construct ``(W-, W+, U0, A, M)``; see the module docstring."""
    n = g.n
    alpha = Fraction(alpha)
    if alpha < Fraction(1, 2):
        raise PreconditionError("alpha must be at least 1/2")
    n_w = round(cfg.c * n)
    if not math.floor(cfg.c * n) <= ell <= math.ceil(2 * cfg.c * n):
        raise PreconditionError(f"ell={ell} outside [cn, 2cn]")
    if vprime is None:
        vprime, rich_info = rich_vertex_set(g, cfg)
    else:
        rich_info = {"rich": None}
    nb = _Neighbourhoods(g, vprime)
    n_prime = len(nb.verts)
    phi = cfg.diversity_frac
    thr_full = phi * n_prime
    h_cap = cfg.h_degree_scale * math.sqrt(n)

    def attempt(a: int):
        rng = stream(cfg.seed, "step2", ell, a)
        u1 = _subset(n, nb.verts, 2 * ell, rng)
        cols = nb.positions(u1)
        # claim (i): diversity survives restriction to U1
        ok_pairs, bad_pairs = _audit_pairs_kept(nb, cols, thr_full, phi * ell)
        ok_tuples, bad_tuples = _audit_tuple_pairs(g, nb, u1, cfg, phi * ell, rng)
        # claim (ii): most vertices share their U1-degree with few others
        d_u1 = nb.sub[:, cols].sum(axis=1).astype(np.int64)
        _, inverse, counts = np.unique(d_u1, return_inverse=True, return_counts=True)
        d_h = counts[inverse] - 1
        low = nb.verts[d_h <= h_cap]
        w_set = VertexSet.of(n, low.tolist())
        outside = (w_set - u1).sorted()
        detail = {"bad_pairs": bad_pairs, "bad_tuple_pairs": bad_tuples, "W": len(low),
                  "W_outside_U1": len(outside), "max_H_degree": int(d_h.max())}
        if not (ok_pairs and ok_tuples and len(low) >= 7 * cfg.c * n
                and len(outside) >= 3 * n_w):
            raise StageFailure("step2.diversity_anticoncentration", "audit failed", a + 1, detail)
        deg_u1 = _degrees(g, u1)
        order = sorted(outside, key=lambda x: (int(deg_u1[x]), x))
        w1 = VertexSet.of(n, order[:n_w])
        w2 = VertexSet.of(n, order[-n_w:])
        e1, e2 = induced_edges(g, w1), induced_edges(g, w2)
        c1, c2 = cross_edges(g, w1, u1), cross_edges(g, w2, u1)
        lhs = (e2 + alpha * c2) - (e1 + alpha * c1)
        base = alpha * (c2 - c1)
        if lhs >= base / 4:
            branch, w_minus, w_plus, u0, value = "keep", w1, w2, u1, lhs
        else:
            branch, w_minus, w_plus = "halve", w2, w1
            mean = (e1 - e2) + alpha * (c1 - c2) / 2
            u0 = None
            for b in range(HALVING_ATTEMPTS):
                sub_rng = stream(cfg.seed, "step2", ell, a, "halve", b)
                cand = _subset(n, u1.sorted(), ell, sub_rng)
                val = _weighted(g, w_plus, cand, alpha) - _weighted(g, w_minus, cand, alpha)
                ok_div, _ = _audit_pairs_kept(nb, nb.positions(cand), thr_full, phi * ell / 2)
                if val >= mean and val > 0 and ok_div:
                    u0, value = cand, val
                    break
            if u0 is None:
                raise StageFailure("step2.discrepancy", "no half of U1 kept the discrepancy",
                                   a + 1, {"mean": float(mean)})
        if not value > 0:
            raise StageFailure("step2.discrepancy", "weighted discrepancy not positive", a + 1,
                               {"value": float(value)})
        a0 = vprime - u1 - w1 - w2
        return _build_matching(g, cfg, rng, a, ell, w_minus, w_plus, u0, a0, vprime, value,
                               {**detail, "branch": branch, "A0": a0.size, "U1": u1})

    out, attempts = _retrying(cfg, "step2", attempt)
    out.info.update(rich_info)
    out.info["attempts"] = attempts
    out.info["alpha"] = str(alpha)
    return out


def _build_matching(g: Graph, cfg: PipelineConfig, rng, a: int, ell: int, w_minus: VertexSet,
                    w_plus: VertexSet, u0: VertexSet, a0: VertexSet, vprime: VertexSet,
                    value: Fraction, info: dict) -> Step2Output:
    n = g.n
    K = cfg.K
    pool = np.asarray(a0.sorted(), dtype=np.int64)
    if len(pool) < K:
        raise StageFailure("step2.matching", f"|A0|={len(pool)} < K", a + 1)
    m0 = _sample_k_subsets(pool, K, cfg.m0_budget, rng)
    common = _common_nbhd_sizes(_packed_rows(g, vprime), m0)
    m0 = m0[common >= cfg.eps ** K * vprime.size]
    if len(m0) == 0:
        raise StageFailure("step2.matching", "no K-subset has a large common neighbourhood", a + 1)
    d_wm, d_wp, d_u0 = _degrees(g, w_minus), _degrees(g, w_plus), _degrees(g, u0)
    span = K * n + 1
    keys = (d_wm[m0].sum(1).astype(np.int64) * span + d_wp[m0].sum(1)) * span + d_u0[m0].sum(1)
    values, first, counts = np.unique(keys, return_index=True, return_counts=True)
    best = np.flatnonzero(counts == counts.max())
    key = values[best[np.argmin(first[best])]]  # ties: first key seen
    bucket = m0[keys == key]
    flower = sunflower_extract(Hypergraph.of(K, bucket.tolist()))
    kernel = KTuple.of(flower.kernel) if flower.kernel else None
    petals = [KTuple.of(p) for p in flower.petals]
    k = K - len(flower.kernel)
    dk = (lambda vec: int(vec[list(flower.kernel)].sum())) if kernel else (lambda vec: 0)
    k_wm, rest = divmod(int(key), span * span)
    k_wp, k_u0 = divmod(rest, span)
    common_deg = (k_wm - dk(d_wm), k_wp - dk(d_wp), k_u0 - dk(d_u0))
    # drop pairs whose neighbourhoods in U0 are too alike (Turán on the conflict graph)
    threshold = cfg.diversity_frac * u0.size
    mismatch = pairwise_mismatch(tuple_mult_vectors(g, petals, u0))
    conflict = [(i, j) for i, j in zip(*np.nonzero(np.triu(mismatch < threshold, k=1)))]
    from .graph import build_graph
    keep = turan_independent_set(build_graph(len(petals), conflict)).sorted()
    matching = [petals[i] for i in keep]
    info.update({"M0": int(len(m0)), "bucket": int(len(bucket)), "petals": len(petals),
                 "kernel": sorted(flower.kernel), "M": len(matching)})
    mu = cfg.mu_scale * math.sqrt(n)
    if len(matching) < max(2, mu):
        raise StageFailure("step2.matching", f"matching has {len(matching)} < {mu:.1f} tuples",
                           a + 1, {k_: v for k_, v in info.items() if k_ != "U1"})
    out = Step2Output(w_minus, w_plus, u0, _union(n, matching), matching, k, *common_deg,
                      Fraction(value), threshold, info)
    return out


# --- switching --------------------------------------------------------------


@dataclass(frozen=True)
class SwitchSchedule:
    minus_order: tuple[int, ...]
    plus_order: tuple[int, ...]
    n: int

    @property
    def n_w(self) -> int:
        return len(self.minus_order)

    def w(self, i: int) -> VertexSet:
        """``W_i``: the first ``n_W - i`` of ``W-`` and the first ``i`` of ``W+``."""
        if not 0 <= i <= self.n_w:
            raise InputError(f"index {i} outside [0, {self.n_w}]")
        return VertexSet.of(self.n, self.minus_order[:self.n_w - i] + self.plus_order[:i])

    def swap(self, i: int) -> tuple[int, int]:
        """Vertices leaving and entering between ``W_{i-1}`` and ``W_i``."""
        return self.minus_order[self.n_w - i], self.plus_order[i - 1]


def switching_sequence(w_minus: VertexSet, w_plus: VertexSet, seed) -> SwitchSchedule:
    if w_minus.size != w_plus.size:
        raise InputError("W- and W+ must have equal sizes")
    rng = seed if isinstance(seed, np.random.Generator) else _child(seed, "switching")
    minus = np.asarray(w_minus.sorted())[rng.permutation(w_minus.size)].tolist()
    plus = np.asarray(w_plus.sorted())[rng.permutation(w_plus.size)].tolist()
    return SwitchSchedule(tuple(minus), tuple(plus), w_minus.n)


@dataclass
class SwitchTrace:
    e_w: np.ndarray        # e(W_i)
    e_wu: np.ndarray       # e(W_i, U0)
    tuple_deg: np.ndarray  # d_{W_i}(v) for v in M, shape (|M|, n_W + 1)


def trace_switching(g: Graph, schedule: SwitchSchedule, u0: VertexSet,
                    matching: Sequence[KTuple]) -> SwitchTrace:
    n_w = schedule.n_w
    tracker = SwitchTracker(g, schedule.w(0), u0, matching)
    e_w = np.empty(n_w + 1, dtype=np.int64)
    e_wu = np.empty(n_w + 1, dtype=np.int64)
    deg = np.empty((len(matching), n_w + 1), dtype=np.int64)
    for i in range(n_w + 1):
        if i:
            tracker.swap(*schedule.swap(i))
        e_w[i], e_wu[i] = tracker.edges, tracker.cross
        deg[:, i] = tracker.tuple_degrees
    return SwitchTrace(e_w, e_wu, deg)


@dataclass
class LonelyTrack:
    d: np.ndarray                  # anchor degrees d_i
    members: list[np.ndarray]      # indices into M of M_i
    runs: list[tuple[int, int, int]]
    tau: int
    used_lemma: bool
    transitions: int
    mu: float
    sigma: float


def lonely_parameters(n: int, k: int, cfg: PipelineConfig) -> tuple[float, float, float, float]:
    """``(mu, sigma, lam, rho)`` for the particle system of matching degrees."""
    log_n = math.log(n)
    mu = cfg.mu_scale * math.sqrt(n)
    sigma = cfg.sigma_scale * math.sqrt(n) / log_n
    lam = 2 * math.sqrt(n) * log_n
    return mu, sigma, lam, 2 * k


def track_matching_degrees(g: Graph, schedule: SwitchSchedule, step2: Step2Output,
                           cfg: PipelineConfig, trace: SwitchTrace | None = None) -> LonelyTrack:
    """Anchor degrees ``d_i`` and crowds ``M_i`` following the matching through the switch."""
    n = g.n
    if trace is None:
        trace = trace_switching(g, schedule, step2.U0, step2.M)
    n_w = schedule.n_w
    i = np.arange(n_w + 1)
    ideal = ((n_w - i) * step2.d_Wm + i * step2.d_Wp) / n_w
    pos = trace.tuple_deg - ideal[None, :]
    bound = math.sqrt(n) * math.log(n)
    if np.abs(pos).max() > bound:
        raise StageFailure("per_l.concentration", "matching degrees strayed from the ideal path",
                           detail={"max_dev": float(np.abs(pos).max()), "bound": bound})
    mu, sigma, lam, rho = lonely_parameters(n, step2.k, cfg)
    tau = int(len(step2.M) * sigma ** 2 / (8 * rho * mu * lam))
    runs: list[tuple[int, int, int]] = []
    used_lemma = tau >= 1
    if used_lemma:
        start = 0
        while start <= n_w:
            stop = min(n_w + 1, start + tau + 1)
            ps = ParticleSystem(pos[:, start:stop], rho, sigma, mu, lam)
            runs.append((never_lonely_particle(ps), start, stop))
            start = stop
    else:
        try:
            runs = never_lonely_runs(ParticleSystem(pos, rho, sigma, mu, lam))
        except PreconditionError as exc:
            raise StageFailure("per_l.lonely", str(exc)) from exc
    d = np.empty(n_w + 1, dtype=np.int64)
    members = []
    for particle, start, stop in runs:
        d[start:stop] = trace.tuple_deg[particle, start:stop]
    for t in range(n_w + 1):
        close = np.flatnonzero(np.abs(trace.tuple_deg[:, t] - d[t]) <= sigma)
        if len(close) < mu:
            raise StageFailure("per_l.lonely", f"crowd at time {t} has {len(close)} < {mu:.1f}")
        members.append(close)
    transitions = int(np.count_nonzero(np.abs(np.diff(d)) > step2.k))
    limit = n_w / tau if used_lemma else len(runs) - 1
    if transitions > limit:
        raise StageFailure("per_l.lonely", "too many anchor transitions",
                           detail={"transitions": transitions, "limit": limit})
    return LonelyTrack(d, members, runs, tau, used_lemma, transitions, mu, sigma)


def assemble_e(trace: SwitchTrace, d: np.ndarray, alpha: Fraction, n_z: int) -> list[Fraction]:
    """``e_i = e(W_i) + alpha e(U0, W_i) + n_Z d_i`` in exact arithmetic."""
    return [int(a) + alpha * int(b) + n_z * int(c) for a, b, c in zip(trace.e_w, trace.e_wu, d)]


@dataclass
class SeparatedIndices:
    e_values: list
    chosen: tuple[int, ...]
    min_gap: float
    kappa: float
    rho: float
    sigma: float


def select_separated_indices(e: Sequence, n: int, cfg: PipelineConfig) -> SeparatedIndices:
    """Indices ``0 = i_1 < ... < i_t = n_W`` with consecutive e-gaps at least ``sep_sigma n``.

    Runs the interval walk and a greedy pass and keeps the longer answer;
    both satisfy the same postconditions.
    """
    rho, sigma = cfg.sep_rho * n, cfg.sep_sigma * n
    p = [float(x) for x in e]
    if p[-1] < p[0]:
        raise StageFailure("per_l.separated_indices", "e decreases overall",
                           detail={"lambda": p[-1] - p[0]})
    walk = well_separated_subsequence(p, rho, sigma)
    greedy = greedy_separated_subsequence(p, sigma)
    best: SeparatedSubsequence = max((walk, greedy), key=lambda s: len(s.indices))
    if best.degenerate:
        raise StageFailure("per_l.separated_indices", "total range below the gap",
                           detail={"lambda": p[-1] - p[0], "sigma": sigma})
    gaps = [p[b] - p[a] for a, b in zip(best.indices, best.indices[1:])]
    diffs = np.diff(np.asarray(p))
    kappa = float(np.abs(diffs[np.abs(diffs) > rho]).sum())
    return SeparatedIndices(list(e), best.indices, min(gaps), kappa, rho, sigma)


# --- final U ----------------------------------------------------------------


def gap_constant(u0_size: int, n_d: int) -> float:
    """Smallest ``Q`` (step 1/4) with ``sum_{r >= Q sqrt(n_D)} P(|g| >= r) <= Q sqrt(n_D)``.

    Tail probabilities come from :func:`concentration_bound` for a
    ``(|U0|, n_D/|U0|, 1)`` variable.
    """
    if n_d == 0:
        return 0.0
    p = n_d / u0_size
    root = math.sqrt(n_d)
    q = 0.25
    while True:
        r = math.ceil(q * root)
        tail = 0.0
        while True:
            term = concentration_bound(u0_size, p, 1, r)
            tail += term
            if term < 1e-12:
                break
            r += 1
        if tail <= q * root:
            return q
        q += 0.25


@dataclass
class FinalU:
    D1: VertexSet
    D: VertexSet
    U: VertexSet
    g: np.ndarray
    g_sum: float
    g_bound: float
    attempts: int


def sample_final_U(g: Graph, u0: VertexSet, n_d: int, schedule: SwitchSchedule,
                   cfg: PipelineConfig, seed,
                   precondition: Callable[[FinalU], bool] | None = None) -> FinalU:
    """Random ``D`` (inside a random ``D1`` of twice the size) with small gap deviations ``g_i``."""
    if 2 * n_d > u0.size:
        raise PreconditionError("n_D must be at most |U0| / 2")
    n_w = schedule.n_w
    alpha = Fraction(u0.size - n_d, u0.size)
    q = cfg.gap_q if cfg.gap_q is not None else gap_constant(u0.size, n_d)
    bound = 20 * q * n_w * math.sqrt(n_d)
    plus = np.asarray(schedule.plus_order, dtype=np.int64)
    minus = np.asarray(schedule.minus_order[::-1], dtype=np.int64)  # w-_{n_W - i + 1}
    d_u0 = _degrees(g, u0).astype(np.float64)
    last = None
    for attempt in range(cfg.retry_limit):
        rng = _child(seed, "final_U", attempt)
        d1 = _subset(g.n, u0.sorted(), 2 * n_d, rng)
        d = _subset(g.n, d1.sorted(), n_d, rng)
        u = u0 - d
        d_u = _degrees(g, u).astype(np.float64)
        gaps = (d_u[plus] - d_u[minus]) - float(alpha) * (d_u0[plus] - d_u0[minus])
        total = float(np.abs(gaps).sum())
        result = FinalU(d1, d, u, gaps, total, bound, attempt + 1)
        if total > bound:
            last = f"sum |g_i| = {total:.1f} > {bound:.1f}"
            continue
        if precondition is not None and not precondition(result):
            last = "too few chosen indices produced witnesses"
            continue
        return result
    raise StageFailure("per_l.final_U", last or "exhausted", cfg.retry_limit)


# --- augmentation -----------------------------------------------------------


@dataclass
class AugmentResult:
    values: dict                  # edge count -> tuple of KTuples forming Z
    n_s: int
    index_set: tuple[int, ...]
    X: list[KTuple]
    audits: dict
    collisions: int = 0


def _equal_value_graph(values: Sequence[int]):
    from .graph import build_graph
    edges = [(i, j) for i in range(len(values)) for j in range(i + 1, len(values))
             if values[i] == values[j]]
    return build_graph(len(values), edges), len(edges)


def sub_random_augment(g: Graph, w: VertexSet, m_sub: Sequence[KTuple], u0: VertexSet, n_d: int,
                       n_z: int, cfg: PipelineConfig, *, d_u0: int, d1: VertexSet | None = None,
                       d: VertexSet | None = None, d_w: float | None = None,
                       dw_tol: float | None = None, seed=0) -> AugmentResult:
    """Edge counts ``e(W u U u V_Z)`` for many ``Z`` of ``n_Z`` tuples, all distinct.

    ``d1``/``d`` may be supplied (shared across calls); otherwise they are
    drawn here with the retry budget.
    """
    n = g.n
    m_sub = list(m_sub)
    root = math.sqrt(max(n_d, 1))
    # hypotheses
    if u0.size < 3 * n_d:
        raise StageFailure("sub_random.hypotheses", "|U0| < 3 n_D")
    if len(m_sub) < max(2, cfg.c * math.sqrt(n_d)):
        raise StageFailure("sub_random.hypotheses", f"only {len(m_sub)} tuples")
    if diversity_violation_scan(g, u0, m_sub, cfg.diversity_frac * u0.size):
        raise StageFailure("sub_random.hypotheses", "tuples not diverse in U0")
    if any(tuple_degree_into(g, t, u0) != d_u0 for t in m_sub):
        raise StageFailure("sub_random.hypotheses", "degrees into U0 differ")
    dw = np.asarray([tuple_degree_into(g, t, w) for t in m_sub])
    centre = float(np.median(dw)) if d_w is None else d_w
    tol = root if dw_tol is None else dw_tol
    if np.abs(dw - centre).max() > tol:
        raise StageFailure("sub_random.hypotheses", "degrees into W not near-common")

    n_s = n_z - 1
    s0 = m_sub[0::2] if n_s else []
    x0 = m_sub[1::2] if n_s else m_sub
    share = Fraction(n_d, u0.size)  # 1 - alpha
    alpha = 1 - share
    d_d = share * d_u0

    def x_s_split(d1_: VertexSet):
        deg1 = _degrees(g, d1_)
        ok_div = not diversity_violation_scan(g, d1_, x0, cfg.diversity_frac * n_d)
        near = lambda t: abs(_tuple_sums(deg1, [t])[0] - 2 * d_d) <= cfg.x_degree_q * root
        x = [t for t in x0 if near(t)]
        s1 = [t for t in s0 if near(t)]
        s0_deg = _tuple_sums(deg1, s0).tolist()
        _, h_edges = _equal_value_graph(s0_deg)
        audits = {"x_div": ok_div, "X": len(x), "S1": len(s1), "H_edges": h_edges}
        ok = (ok_div and 2 * len(x) >= len(x0) and 2 * len(s1) >= len(s0) and len(x) >= 1
              and h_edges <= cfg.h_edge_scale * root)
        return ok, x, s1, audits

    if d1 is None:
        for attempt in range(cfg.retry_limit):
            cand = _subset(n, u0.sorted(), 2 * n_d, _child(seed, "augment", "D1", attempt))
            ok, x, s1, audits = x_s_split(cand)
            if ok:
                d1 = cand
                break
        else:
            raise StageFailure("sub_random.x_s_split", "D1 audits failed", cfg.retry_limit, audits)
    else:
        ok, x, s1, audits = x_s_split(d1)
        if not ok:
            raise StageFailure("sub_random.x_s_split", "D1 audits failed", 1, audits)

    deg1 = _degrees(g, d1)
    s1_deg = _tuple_sums(deg1, s1).tolist()
    eq_graph, _ = _equal_value_graph(s1_deg)
    s2 = [s1[i] for i in turan_independent_set(eq_graph).sorted()]
    if len(s2) < 2 * n_s:
        raise StageFailure("sub_random.x_s_split", f"|S2|={len(s2)} < 2 n_S={2 * n_s}")
    s2.sort(key=lambda t: (int(_tuple_sums(deg1, [t])[0]), t.vertices))
    s_minus, s_plus = s2[:n_s], s2[len(s2) - n_s:]

    def s_at(i: int) -> list[KTuple]:
        return s_minus[:i] + s_plus[:n_s - i]

    def final_degrees(d_: VertexSet):
        u = u0 - d_
        base = w | u
        e_base = induced_edges(g, base)
        deg_d = _degrees(g, d_)
        e_vals, i1, i2, x_sets = [], [], [], []
        for i in range(n_s + 1):
            vs = _union(n, s_at(i))
            ui = base | vs
            e_vals.append(induced_edges(g, ui) - e_base)
            if abs(cross_edges(g, d_, vs) - n_s * d_d) <= cfg.B * n_d:
                i1.append(i)
            deg_ui = _degrees(g, ui)
            dx = _tuple_sums(deg_ui, x).tolist()
            eq, _ = _equal_value_graph(dx)
            xi = turan_independent_set(eq).sorted()
            x_sets.append(xi)
            if len(xi) >= 2 * cfg.gamma3 * len(x):
                i2.append(i)
        x_star = [j for j, t in enumerate(x)
                  if abs(d_d - _tuple_sums(deg_d, [t])[0]) <= cfg.Q4 * root]
        deltas = np.diff(np.asarray(e_vals, dtype=np.float64))
        big = float(np.abs(deltas[np.abs(deltas) >= cfg.Q2 * root]).sum())
        need = (1 - cfg.gamma1 / (8 * cfg.Q2)) * (n_s + 1)
        audits = {"I1": len(i1), "I2": len(i2), "X_star": len(x_star), "need": need,
                  "rise": e_vals[-1] - e_vals[0], "big_steps": big}
        ok = (len(i1) >= need and len(i2) >= need
              and len(x_star) >= (1 - cfg.gamma3) * len(x)
              and e_vals[-1] - e_vals[0] >= 3 * cfg.gamma1 * n_s * root
              and big <= cfg.gamma1 * n_s * root)
        return ok, (u, e_base, e_vals, set(i1) & set(i2), x_sets, set(x_star)), audits

    if d is None:
        for attempt in range(cfg.retry_limit):
            cand = _subset(n, d1.sorted(), n_d, _child(seed, "augment", "D", attempt))
            ok, state, audits2 = final_degrees(cand)
            if ok:
                d = cand
                break
        else:
            raise StageFailure("sub_random.final_different_degrees", "D audits failed",
                               cfg.retry_limit, audits2)
    else:
        if not d.bits & ~d1.bits == 0:
            raise InputError("D must be a subset of D1")
        ok, state, audits2 = final_degrees(d)
        if not ok:
            raise StageFailure("sub_random.final_different_degrees", "D audits failed", 1, audits2)
    u, e_base, e_vals, good, x_sets, x_star = state

    if n_s:
        sep = well_separated_subsequence([float(v) for v in e_vals], cfg.Q2 * root, root)
        seq = [] if sep.degenerate else [i for i in sep.indices if i in good]
    else:
        seq = [0] if 0 in good else []
    index_set = tuple(seq[::max(1, math.ceil(4 * cfg.Q4))])

    values: dict = {}
    collisions = 0
    target = alpha * n_z * d_u0
    base = w | u
    for i in index_set:
        s_i = s_at(i)
        ui = base | _union(n, s_i)
        e_ui = e_base + e_vals[i]
        deg_ui = _degrees(g, ui)
        for j in x_sets[i]:
            if j not in x_star:
                continue
            t = x[j]
            z = tuple(s_i) + (t,)
            if abs(cross_edges(g, u, _union(n, z)) - target) > cfg.B * n_d:
                continue
            value = e_ui + int(_tuple_sums(deg_ui, [t])[0]) + induced_edges(g, VertexSet(n, t.mask()))
            if value in values:
                collisions += 1
                continue
            values[value] = z
    return AugmentResult(values, n_s, index_set, x, {**audits, **audits2}, collisions)


# --- witnesses --------------------------------------------------------------


@dataclass
class WitnessSet:
    level: int
    witnesses: list[tuple[VertexSet, int]] = field(default_factory=list)

    @property
    def distinct_edge_counts(self) -> int:
        return len({e for _, e in self.witnesses})

    def edge_counts(self) -> list[int]:
        return [e for _, e in self.witnesses]

    def to_dict(self) -> dict:
        return {"level": self.level,
                "witnesses": [{"vertices": s.sorted(), "edges": e} for s, e in self.witnesses],
                "distinct_edge_counts": self.distinct_edge_counts}

    @classmethod
    def from_dict(cls, data: dict, n: int) -> "WitnessSet":
        return cls(int(data["level"]),
                   [(VertexSet.of(n, w["vertices"]), int(w["edges"])) for w in data["witnesses"]])


@dataclass
class Certification:
    ok: bool
    problems: list[str]

    def __bool__(self) -> bool:
        return self.ok


def certify_witnesses(g: Graph, ws: WitnessSet) -> Certification:
    """Recount every witness from scratch; check sizes and pairwise distinct edge counts."""
    problems = []
    seen: dict = {}
    for idx, (s, e) in enumerate(ws.witnesses):
        if s.size != ws.level:
            problems.append(f"witness {idx} has {s.size} vertices, expected {ws.level}")
        actual = induced_edges(g, s)
        if actual != e:
            problems.append(f"witness {idx} records {e} edges but has {actual}")
        if e in seen:
            problems.append(f"witnesses {seen[e]} and {idx} share edge count {e}")
        seen.setdefault(e, idx)
    return Certification(not problems, problems)


# --- per-level driver -------------------------------------------------------


@dataclass
class PerLResult:
    ell: int
    witness_set: WitnessSet | None
    failure: dict | None
    report: dict
    timings: dict

    @property
    def ok(self) -> bool:
        return self.failure is None


def run_per_l(g: Graph, ell: int, cfg: PipelineConfig, vprime: VertexSet | None = None,
              rich_info: dict | None = None) -> PerLResult:
    """Full construction at one ``ell``; failures are returned, not raised."""
    timings: dict = {}
    report: dict = {"ell": ell}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = round(now - clock, 6)
        clock = now

    try:
        ws = _run_per_l(g, ell, cfg, vprime, rich_info, report, lap)
        return PerLResult(ell, ws, None, report, timings)
    except StageFailure as exc:
        lap("failed")
        report["failure"] = exc.to_dict()
        return PerLResult(ell, None, exc.to_dict(), report, timings)


def _run_per_l(g, ell, cfg, vprime, rich_info, report, lap) -> WitnessSet:
    n = g.n
    f = round(cfg.c_prime * n)
    alpha = _clamp_alpha(ell, f)
    if vprime is None:
        vprime, rich_info = rich_vertex_set(g, cfg)
    report["richness"] = rich_info
    lap("richness")
    step2 = build_step2(g, alpha, ell, cfg, vprime)
    lap("step2")
    u0 = step2.U0
    n_d = math.floor((1 - alpha) * u0.size)
    n_z = max(1, math.floor(cfg.delta_aug * math.sqrt(cfg.c_prime * n) / step2.k))
    report["step2"] = {"W": step2.W_minus.size, "U0": u0.size, "A": step2.A.size,
                       "M": len(step2.M), "k": step2.k,
                       "degrees": [step2.d_Wm, step2.d_Wp, step2.d_U0],
                       "discrepancy": float(step2.discrepancy_value),
                       **{k: v for k, v in step2.info.items() if k not in ("U1",)}}
    report["n_D"], report["n_Z"], report["alpha"] = n_d, n_z, str(alpha)

    def schedule_attempt(a: int):
        sched = switching_sequence(step2.W_minus, step2.W_plus, stream(cfg.seed, "per_l", ell, a))
        trace = trace_switching(g, sched, u0, step2.M)
        track = track_matching_degrees(g, sched, step2, cfg, trace)
        e = assemble_e(trace, track.d, alpha, n_z)
        sel = select_separated_indices(e, n, cfg)
        return sched, trace, track, e, sel

    (sched, trace, track, e, sel), attempts = _retrying(cfg, "per_l", schedule_attempt)
    report["switching"] = {"attempts": attempts, "tau": track.tau, "used_lemma": track.used_lemma,
                           "runs": len(track.runs), "transitions": track.transitions,
                           "chosen": list(sel.chosen), "min_gap": float(sel.min_gap),
                           "kappa": sel.kappa}
    lap("switching")

    outcomes: dict = {}

    def enough(fu: FinalU) -> bool:
        outcomes.clear()
        for j, i in enumerate(sel.chosen):
            members = [step2.M[t] for t in track.members[i]]
            try:
                outcomes[i] = sub_random_augment(
                    g, sched.w(i), members, u0, n_d, n_z, cfg, d_u0=step2.d_U0, d1=fu.D1,
                    d=fu.D, d_w=float(track.d[i]), dw_tol=track.sigma,
                    seed=(cfg.seed, "per_l", ell, "augment", j))
            except StageFailure as exc:
                outcomes[i] = exc
        good = sum(1 for r in outcomes.values() if isinstance(r, AugmentResult) and r.values)
        return good >= math.ceil(cfg.success_frac * len(sel.chosen))

    fu = sample_final_U(g, u0, n_d, sched, cfg, (cfg.seed, "per_l", ell, "final"), enough)
    lap("augment")
    level = sched.n_w + u0.size - n_d + step2.k * n_z
    ws = WitnessSet(level)
    running_max = None
    dropped = 0
    per_index = []
    for i in sel.chosen:
        res = outcomes.get(i)
        if not isinstance(res, AugmentResult):
            per_index.append({"index": i, "failure": res.stage if res else None})
            continue
        base = sched.w(i) | fu.U
        kept = 0
        for value in sorted(res.values):
            if running_max is not None and value <= running_max:
                dropped += 1
                continue
            ws.witnesses.append((base | _union(n, res.values[value]), value))
            kept += 1
        if res.values:
            running_max = max(running_max if running_max is not None else -1, max(res.values))
        per_index.append({"index": i, "values": len(res.values), "kept": kept,
                          "collisions": res.collisions})
    report["final_U"] = {"attempts": fu.attempts, "g_sum": fu.g_sum, "g_bound": fu.g_bound}
    report["augment"] = {"per_index": per_index, "dropped_overlaps": dropped}
    report["level"] = level
    report["witnesses"] = ws.distinct_edge_counts
    lap("collect")
    if not ws.witnesses:
        raise StageFailure("per_l.collect", "no witnesses survived")
    return ws


# --- all levels -------------------------------------------------------------


@dataclass
class FullReport:
    results: list[PerLResult]

    def levels(self) -> dict:
        """``level -> set of edge counts`` with equal levels merged."""
        out: dict = {}
        for r in self.results:
            if r.witness_set is not None:
                out.setdefault(r.witness_set.level, set()).update(r.witness_set.edge_counts())
        return out

    @property
    def total_pairs(self) -> int:
        return sum(len(v) for v in self.levels().values())

    @property
    def failures(self) -> list[dict]:
        return [{"ell": r.ell, **r.failure} for r in self.results if r.failure]

    def table_rows(self) -> list[tuple]:
        rows = []
        for r in self.results:
            ws = r.witness_set
            if ws is None:
                rows.append((r.ell, "", 0, "", ""))
            else:
                es = ws.edge_counts()
                rows.append((r.ell, ws.level, len(es), min(es), max(es)))
        return rows

    def to_csv(self) -> str:
        lines = ["ell,ell_prime,witness_count,min_e,max_e"]
        lines += [",".join(str(x) for x in row) for row in self.table_rows()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"levels": [r.report for r in self.results], "failures": self.failures,
                "total_distinct_pairs": self.total_pairs}


def ell_grid(n: int, cfg: PipelineConfig) -> list[int]:
    lo, hi = math.ceil(cfg.c * n), math.floor(2 * cfg.c * n)
    if cfg.ell_grid == 1 or hi <= lo:
        return [lo]
    return sorted({round(x) for x in np.linspace(lo, hi, cfg.ell_grid)})


def run_full(g: Graph, cfg: PipelineConfig, ells: Sequence[int] | None = None,
             threads: int = 1) -> FullReport:
    """``run_per_l`` over a grid of ``ell``; failures are recorded and the run goes on."""
    ells = list(ells) if ells is not None else ell_grid(g.n, cfg)
    vprime, rich_info = rich_vertex_set(g, cfg)
    work = lambda ell: run_per_l(g, ell, cfg, vprime, rich_info)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, ells))
    else:
        results = [work(ell) for ell in ells]
    return FullReport(results)


def dumps(obj) -> str:
    """Canonical JSON used for every artefact that must replay byte-for-byte."""
    return json.dumps(obj, sort_keys=True, indent=2, default=str) + "\n"
