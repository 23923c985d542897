"""Sampled audits of (delta, eps)-richness, bad-tuple counts and tuple diversity."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .graph import (Graph, KTuple, VertexSet, pairwise_mismatch, tuple_mult_vectors)
from .hypergeom import _partial_fisher_yates
from .rng import as_generator

_BATCH = 256


@dataclass(frozen=True)
class RichnessParams:
    delta: float
    epsilon: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InputError("delta must lie in (0, 1)")
        if not 0 < self.epsilon < 1:
            raise InputError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class RichnessReport:
    n: int
    delta: float
    epsilon: float
    samples: int
    worst_violators: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.worst_violators <= self.threshold

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "epsilon": self.epsilon,
                "samples": self.samples, "worst_violators": self.worst_violators,
                "threshold": self.threshold, "pass": self.passed}


def _violation_counts(g: Graph, indicators: np.ndarray, eps: float) -> np.ndarray:
    """Violator counts for each column of a 0/1 (n x batch) indicator matrix."""
    m = g.matrix.astype(np.float32)
    ind = indicators.astype(np.float32)
    deg = m @ ind
    size = ind.sum(axis=0)
    non = size[None, :] - deg - ind  # a vertex is not its own non-neighbour
    bar = eps * size[None, :]
    bad = (deg < bar) | (non < bar)
    return bad.sum(axis=0)


def violating_vertices(g: Graph, w: VertexSet, eps: float) -> VertexSet:
    """Vertices with fewer than ``eps |w|`` neighbours or non-neighbours in ``w``."""
    if w.size == 0:
        raise InputError("w must be nonempty")
    bar = eps * w.size
    bits = 0
    for v in range(g.n):
        d = (g.adj[v] & w.bits).bit_count()
        non = w.size - d - (w.bits >> v & 1)
        if d < bar or non < bar:
            bits |= 1 << v
    return VertexSet(g.n, bits)


def audit_sizes(n: int, delta: float) -> list[int]:
    return [math.ceil(delta * n), math.ceil((delta + 1) * n / 2), n]


def richness_audit(g: Graph, params: RichnessParams, samples: int, seed) -> RichnessReport:
    """Worst violator count over ``samples`` random W, cycling through three sizes."""
    if samples < 1:
        raise InputError("samples must be at least 1")
    n = g.n
    rng = as_generator(seed, "richness.audit")
    sizes = audit_sizes(n, params.delta)
    worst = 0
    for start in range(0, samples, _BATCH):
        rows = min(_BATCH, samples - start)
        ind = np.zeros((n, rows), dtype=np.uint8)
        for j in range(rows):
            size = sizes[(start + j) % len(sizes)]
            ind[rng.permutation(n)[:size], j] = 1
        worst = max(worst, int(_violation_counts(g, ind, params.epsilon).max()))
    return RichnessReport(n, params.delta, params.epsilon, samples, worst, n ** params.delta)


@dataclass(frozen=True)
class RichSearch:
    found: bool
    vertices: VertexSet | None
    best: VertexSet
    best_report: RichnessReport
    attempts: int

    def __bool__(self) -> bool:
        return self.found


def find_rich_subgraph(g: Graph, params: RichnessParams, min_frac: float, attempts: int,
                       seed, audit_samples: int = 60) -> RichSearch:
    """Try the whole vertex set, then random subsets of size ``ceil(min_frac n)``.

    Never raises on failure; the least-violating candidate is attached.
    """
    if not 0 < min_frac <= 1:
        raise InputError("min_frac must lie in (0, 1]")
    rng = as_generator(seed, "richness.find")
    size = math.ceil(min_frac * g.n)
    best = None
    tried = 0
    for attempt in range(max(1, attempts)):
        tried += 1
        if attempt == 0:
            cand = VertexSet.full(g.n)
        else:
            cand = VertexSet.of(g.n, rng.permutation(g.n)[:size].tolist())
        sub, _ = g.induced(cand)
        report = richness_audit(sub, params, audit_samples, rng)
        if best is None or report.worst_violators < best[1].worst_violators:
            best = (cand, report)
        if report.passed:
            return RichSearch(True, cand, cand, report, tried)
    return RichSearch(False, None, best[0], best[1], tried)


@dataclass(frozen=True)
class BadTupleCount:
    estimate: float
    exact: bool
    examined: int
    stderr: float


def bad_tuple_census(g: Graph, k: int, eps: float, budget: int, seed) -> BadTupleCount:
    """Number of k-sets whose common neighbourhood has fewer than ``eps^k n`` vertices.

    Exact when ``C(n, k) <= budget``, otherwise ``budget`` uniform samples.
    """
    if k < 1:
        raise InputError("k must be at least 1")
    n = g.n
    total = math.comb(n, k)
    bar = eps ** k * n
    if total <= budget:
        adj = g.adj
        full = (1 << n) - 1
        bad = 0
        for combo in itertools.combinations(range(n), k):
            bits = full
            for v in combo:
                bits &= adj[v]
            if bits.bit_count() < bar:
                bad += 1
        return BadTupleCount(float(bad), True, total, 0.0)
    rng = as_generator(seed, "richness.bad_tuples")
    m = g.matrix.astype(bool)
    hits = 0
    done = 0
    while done < budget:
        rows = min(4096, budget - done)
        picks = _partial_fisher_yates(rng, n, k, rows)
        common = m[picks].all(axis=1).sum(axis=1)
        hits += int(np.count_nonzero(common < bar))
        done += rows
    freq = hits / budget
    return BadTupleCount(freq * total, False, budget, math.sqrt(freq * (1 - freq) / budget) * total)


def _check_disjoint(tuples: Sequence[KTuple]) -> None:
    seen = 0
    for t in tuples:
        mask = t.mask()
        if mask & seen:
            raise InputError("tuples must be pairwise disjoint")
        seen |= mask


def diversity_violation_scan(g: Graph, u: VertexSet, tuples: Sequence[KTuple],
                             threshold: int) -> list[tuple[KTuple, KTuple]]:
    """Pairs whose multiset neighbourhoods in ``u`` differ in fewer than ``threshold`` places."""
    _check_disjoint(tuples)
    if len(tuples) < 2:
        return []
    mismatch = pairwise_mismatch(tuple_mult_vectors(g, tuples, u))
    rows, cols = np.nonzero(np.triu(mismatch < threshold, k=1))
    return [(tuples[i], tuples[j]) for i, j in zip(rows.tolist(), cols.tolist())]
