"""Exact and sampled census of (vertex count, edge count) pairs over induced subgraphs."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import CapacityError, InputError
from .graph import Graph, gnp_half
from .rng import as_generator

EXHAUSTIVE_LIMIT = 24
SAMPLE_BATCH = 2048
_LOW_BITS = 12

EXACT = "exact"
SAMPLED = "sampled-lower-bound"


@dataclass(frozen=True)
class PsiSet:
    pairs: frozenset
    mode: str = EXACT
    sample_budget: int | None = None

    def level(self, ell: int) -> set[int]:
        return {e for v, e in self.pairs if v == ell}

    def edge_counts(self) -> set[int]:
        return {e for _, e in self.pairs}

    def __len__(self) -> int:
        return len(self.pairs)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "pairs": [list(p) for p in sorted(self.pairs)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PsiSet":
        d = json.loads(text)
        return cls(frozenset((int(v), int(e)) for v, e in d["pairs"]), d["mode"])


def gray_code_walk(n: int) -> Iterator[tuple[int, bool]]:
    """Flips ``(vertex, added)`` visiting every subset of ``range(n)`` once from the empty set."""
    bits = 0
    for i in range(1, 1 << n):
        v = (i & -i).bit_length() - 1
        bits ^= 1 << v
        yield v, bool(bits >> v & 1)


def gray_walk_edges(g: Graph) -> Iterator[tuple[int, int]]:
    """``(subset bits, e(subset))`` for all subsets, with incremental edge counts."""
    bits, edges = 0, 0
    yield bits, edges
    for v, added in gray_code_walk(g.n):
        if added:
            edges += (g.adj[v] & bits).bit_count()
            bits |= 1 << v
        else:
            bits &= ~(1 << v)
            edges -= (g.adj[v] & bits).bit_count()
        yield bits, edges


def _low_tables(g: Graph, low: int):
    """Size, edge count and per-high-vertex degree for every subset of the low vertices."""
    masks = np.arange(1 << low, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(low)) & 1).astype(np.int32)
    sizes = member.sum(axis=1)
    m = g.matrix.astype(np.int32)
    inner = m[:low, :low]
    edges = ((member @ inner) * member).sum(axis=1) // 2
    into = member @ m[:low, low:]  # column h - low: degree of high vertex h into the mask
    return sizes, edges, into


def _exhaustive_table(g: Graph) -> np.ndarray:
    n = g.n
    if n > EXHAUSTIVE_LIMIT:
        raise CapacityError(f"exhaustive census needs n <= {EXHAUSTIVE_LIMIT}, got {n}")
    low = min(n, _LOW_BITS)
    high = n - low
    seen = np.zeros((n + 1, n * (n - 1) // 2 + 1), dtype=bool)
    sizes, low_edges, into = _low_tables(g, low)
    cross = np.zeros_like(low_edges)
    high_bits, high_size, high_edges = 0, 0, 0
    seen[sizes, low_edges] = True
    high_adj = [g.adj[low + j] >> low for j in range(high)]
    for j, added in gray_code_walk(high):
        if added:
            high_edges += (high_adj[j] & high_bits).bit_count()
            high_bits |= 1 << j
            high_size += 1
            cross += into[:, j]
        else:
            high_bits &= ~(1 << j)
            high_edges -= (high_adj[j] & high_bits).bit_count()
            high_size -= 1
            cross -= into[:, j]
        seen[sizes + high_size, low_edges + cross + high_edges] = True
    return seen


def exhaustive_psi(g: Graph) -> PsiSet:
    """Every ``(|S|, e(S))`` over all vertex subsets ``S``; requires ``n <= 24``."""
    vs, es = np.nonzero(_exhaustive_table(g))
    return PsiSet(frozenset(zip(vs.tolist(), es.tolist())), EXACT)


def exhaustive_phi(g: Graph) -> set[int]:
    return set(np.flatnonzero(_exhaustive_table(g).any(axis=0)).tolist())


def sampled_psi_values(g: Graph, ell: int, samples: int, seed) -> np.ndarray:
    """``e(S)`` for ``samples`` uniform ``ell``-subsets, as an int64 array.

    Draws come in fixed batches of ``SAMPLE_BATCH`` from one stream, so the
    first ``s`` values are the same whatever the total requested.
    """
    n = g.n
    if not 0 <= ell <= n:
        raise InputError(f"level {ell} outside [0, {n}]")
    if samples < 0:
        raise InputError("samples must be nonnegative")
    if ell <= 1:
        return np.zeros(samples, dtype=np.int64)
    if ell == n:
        return np.full(samples, g.edge_count, dtype=np.int64)
    rng = as_generator(seed, "census.sampled_level", ell)
    dtype = np.float32 if n * n < (1 << 24) else np.float64
    a = g.matrix.astype(dtype)
    out = np.empty(samples, dtype=np.int64)
    rows_idx = np.arange(SAMPLE_BATCH)[:, None]
    done = 0
    while done < samples:
        keys = rng.random((SAMPLE_BATCH, n), dtype=np.float32)
        picks = np.argpartition(keys, ell - 1, axis=1)[:, :ell]
        x = np.zeros((SAMPLE_BATCH, n), dtype=dtype)
        x[rows_idx, picks] = 1
        e = ((x @ a) * x).sum(axis=1) / 2
        take = min(SAMPLE_BATCH, samples - done)
        out[done:done + take] = np.rint(e[:take]).astype(np.int64)
        done += take
    return out


def sampled_psi_level(g: Graph, ell: int, samples: int, seed) -> int:
    """Distinct ``e(S)`` values seen among sampled ``ell``-subsets (a lower bound)."""
    return len(set(sampled_psi_values(g, ell, samples, seed).tolist()))


def sampled_psi(g: Graph, samples: int, seed, levels: Sequence[int] | None = None) -> PsiSet:
    levels = range(g.n + 1) if levels is None else levels
    pairs = set()
    for ell in levels:
        pairs.update((ell, int(e)) for e in set(sampled_psi_values(g, ell, samples, seed).tolist()))
    return PsiSet(frozenset(pairs), SAMPLED, samples)


@dataclass
class ScalingResult:
    rows: list[tuple[int, int, int, int]] = field(default_factory=list)  # n, ell, samples, distinct
    slope: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,ell,samples,distinct_edge_counts\n")
        for row in self.rows:
            buf.write(",".join(str(x) for x in row) + "\n")
        return buf.getvalue()


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(slope) + 0.0  # normalise -0.0


def psi_scaling_experiment(sizes: Sequence[int], samples: int, seed,
                           graph_factory: Callable[[int, int], Graph] = gnp_half) -> ScalingResult:
    """Distinct edge counts at level ``n // 2`` for each size, plus a log-log slope."""
    sizes = list(sizes)
    if not sizes:
        raise InputError("need at least one size")
    if any(n < 64 for n in sizes):
        raise InputError("every size must be at least 64")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InputError("sizes must be strictly ascending")
    result = ScalingResult()
    for n in sizes:
        g = graph_factory(n, seed)
        ell = n // 2
        distinct = sampled_psi_level(g, ell, samples, as_generator(seed, "census.scaling", n))
        result.rows.append((n, ell, samples, distinct))
    if len(sizes) > 1:
        result.slope = fit_loglog_slope(sizes, [r[3] for r in result.rows])
    return result

