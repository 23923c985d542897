"""Deterministic combinatorial subroutines used by the construction pipeline."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import InputError, PreconditionError
from .graph import Graph, VertexSet

# --- Turán ------------------------------------------------------------------


def turan_bound(g: Graph) -> Fraction:
    return sum((Fraction(1, d + 1) for d in g.degrees()), Fraction(0))


def turan_independent_set(g: Graph) -> VertexSet:
    """Greedy independent set: take a minimum-degree vertex, delete its closed
    neighbourhood, repeat.  Ties go to the lowest vertex id.

    The result has at least ``sum(1 / (d(v) + 1))`` vertices.
    """
    alive = (1 << g.n) - 1
    adj = g.adj
    deg = [r.bit_count() for r in adj]
    chosen = 0
    while alive:
        best, best_deg = -1, g.n + 1
        rest = alive
        while rest:
            low = rest & -rest
            v = low.bit_length() - 1
            rest ^= low
            if deg[v] < best_deg:
                best, best_deg = v, deg[v]
                if best_deg == 0:
                    break
        chosen |= 1 << best
        removed = (adj[best] & alive) | (1 << best)
        alive &= ~removed
        # refresh degrees of survivors that lost neighbours
        rest = removed
        while rest:
            low = rest & -rest
            u = low.bit_length() - 1
            rest ^= low
            touched = adj[u] & alive
            while touched:
                lw = touched & -touched
                deg[lw.bit_length() - 1] -= 1
                touched ^= lw
    return VertexSet(g.n, chosen)


def is_independent(g: Graph, s: VertexSet) -> bool:
    return all(not (g.adj[v] & s.bits) for v in s)


# --- sunflowers -------------------------------------------------------------


@dataclass(frozen=True)
class Hypergraph:
    k: int
    edges: tuple[frozenset, ...]

    def __post_init__(self):
        if self.k < 1:
            raise InputError("uniformity must be at least 1")
        seen = []
        known = set()
        for e in self.edges:
            e = frozenset(int(v) for v in e)
            if len(e) != self.k:
                raise InputError(f"edge {sorted(e)} does not have exactly {self.k} vertices")
            if e not in known:
                known.add(e)
                seen.append(e)
        object.__setattr__(self, "edges", tuple(seen))

    @classmethod
    def of(cls, k: int, edges: Iterable[Iterable[int]]) -> "Hypergraph":
        return cls(k, tuple(frozenset(e) for e in edges))

    @property
    def m(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Sunflower:
    kernel: frozenset
    petals: tuple[frozenset, ...]

    def edges(self) -> list[frozenset]:
        return [self.kernel | p for p in self.petals]

    def is_valid(self) -> bool:
        seen: set = set()
        for p in self.petals:
            if p & self.kernel or p & seen:
                return False
            seen |= p
        return True


def sunflower_bound(m: int, k: int) -> int:
    """Guaranteed petal count ``max(1, floor(m^(1/k) / k))``, in exact integers."""
    if m < 1:
        return 0
    q = 0
    while ((q + 1) * k) ** k <= m:
        q += 1
    return max(1, q)


def _greedy_matching(edges: Sequence[frozenset]) -> list[frozenset]:
    used: set = set()
    out = []
    for e in edges:
        if not e & used:
            out.append(e)
            used |= e
    return out


def _sunflower(edges: list[frozenset], k: int) -> Sunflower:
    matching = _greedy_matching(edges)
    m = len(edges)
    if k == 1 or len(matching) ** k >= m:  # matching size >= ceil(m^(1/k))
        return Sunflower(frozenset(), tuple(matching))
    # Every edge meets a matching vertex; recurse on the busiest one's link.
    counts = Counter(v for e in edges for v in e)
    covered = set().union(*matching)
    busiest = min(covered, key=lambda v: (-counts[v], v))
    link = [e - {busiest} for e in edges if busiest in e]
    inner = _sunflower(link, k - 1)
    if len(inner.petals) > len(matching):
        return Sunflower(inner.kernel | {busiest}, inner.petals)
    return Sunflower(frozenset(), tuple(matching))


def sunflower_extract(h: Hypergraph) -> Sunflower:
    """Sunflower with at least :func:`sunflower_bound` petals.

    Greedy maximal matching; if it is smaller than ``ceil(m^(1/k))`` recurse on
    the link of a most-covered matching vertex (lowest id on ties) and keep
    the larger of the two answers.
    """
    if h.m < 1:
        raise PreconditionError("sunflower_extract needs at least one edge")
    edges = sorted(h.edges, key=lambda e: sorted(e))
    return _sunflower(edges, h.k)


def hypergraph_to_text(h: Hypergraph) -> str:
    lines = [f"{h.k} {h.m}"]
    lines.extend(" ".join(str(v) for v in sorted(e)) for e in h.edges)
    return "\n".join(lines) + "\n"


def hypergraph_from_text(text: str) -> Hypergraph:
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if not rows or len(rows[0]) != 2:
        raise InputError("hypergraph text needs a header 'k m'")
    k, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m:
        raise InputError(f"header promises {m} edges, found {len(body)}")
    return Hypergraph.of(k, ([int(x) for x in r] for r in body))


# --- well-separated subsequences --------------------------------------------


@dataclass(frozen=True)
class SeparatedSubsequence:
    indices: tuple[int, ...]
    degenerate: bool = False


def well_separated_bound(p: Sequence[float], rho: float, sigma: float) -> float:
    """``lambda / (rho + sigma) - kappa / rho`` for the sequence ``p``."""
    lam = p[-1] - p[0]
    kappa = sum(d for d in np.diff(np.asarray(p, dtype=float)) if d > rho)
    return lam / (rho + sigma) - kappa / rho


def well_separated_subsequence(p: Sequence[float], rho: float, sigma: float) -> SeparatedSubsequence:
    """Indices ``0 = i_1 < ... < i_s = tau`` with consecutive rises ``>= sigma``.

    Lays closed windows of length ``rho`` separated by gaps of ``sigma`` upward
    from ``p[0]`` and records the first visit to each further window.  The
    last window is open above, so it always contains ``p[tau]`` and may be
    shorter than ``rho`` below ``p[tau]``.  If ``p[tau] - p[0] < sigma`` the
    two endpoints are returned with ``degenerate=True``.
    """
    if sigma > rho:
        raise PreconditionError(f"sigma={sigma} exceeds rho={rho}")
    if sigma <= 0:
        raise PreconditionError("sigma must be positive")
    tau = len(p) - 1
    if tau < 0:
        raise InputError("empty sequence")
    p0, lam = p[0], p[tau] - p[0]
    if lam < 0:
        raise PreconditionError("sequence must end at least as high as it starts")
    if tau == 0:
        return SeparatedSubsequence((0,), degenerate=True)
    if lam < sigma:
        return SeparatedSubsequence((0, tau), degenerate=True)
    step = rho + sigma
    last = int(lam // step)  # index of the open-ended terminal window

    def window(x):
        off = x - p0
        if off < 0:
            return -1
        j = int(off // step)
        if j >= last:
            return last
        return j if off - j * step <= rho else -1

    chosen = [0]
    current = 0
    for i in range(1, tau + 1):
        if current == last:
            break
        j = window(p[i])
        if j > current:
            chosen.append(i)
            current = j
    if len(chosen) == 1:
        chosen.append(tau)
    else:
        chosen[-1] = tau  # p[tau] sits in the terminal window too
    return SeparatedSubsequence(tuple(chosen))


# --- lonely particles -------------------------------------------------------


@dataclass(frozen=True)
class ParticleSystem:
    """``positions[a, i]`` is the position of particle ``a`` at time ``i``."""

    positions: np.ndarray
    rho: float
    sigma: float
    mu: float
    lam: float

    def __post_init__(self):
        pos = np.asarray(self.positions)
        if pos.ndim != 2 or pos.shape[0] == 0 or pos.shape[1] == 0:
            raise InputError("positions must be a nonempty (particles x times) array")
        object.__setattr__(self, "positions", pos)

    @property
    def tau(self) -> int:
        return self.positions.shape[1] - 1

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def max_horizon(self) -> float:
        """Largest ``tau`` allowed by the hypothesis ``tau <= |R| s^2 / (8 mu rho lam)``."""
        return self.size * self.sigma ** 2 / (8 * self.mu * self.rho * self.lam)

    def speed_ok(self) -> bool:
        return bool(np.all(np.abs(np.diff(self.positions, axis=1)) <= self.rho))

    def span_ok(self) -> bool:
        return float(self.positions.max() - self.positions.min()) <= self.lam


def neighbour_counts(column: np.ndarray, radius: float) -> np.ndarray:
    """For each entry, how many entries (itself included) lie within ``radius``."""
    order = np.sort(column)
    hi = np.searchsorted(order, column + radius, side="right")
    lo = np.searchsorted(order, column - radius, side="left")
    return hi - lo


def lonely_mask(ps: ParticleSystem) -> np.ndarray:
    """``out[a, i]`` is True when particle ``a`` is lonely at time ``i``."""
    pos = ps.positions
    out = np.empty(pos.shape, dtype=bool)
    for i in range(pos.shape[1]):
        out[:, i] = neighbour_counts(pos[:, i], ps.sigma) < ps.mu
    return out


def lonely_mask_bruteforce(ps: ParticleSystem) -> np.ndarray:
    pos = ps.positions
    out = np.empty(pos.shape, dtype=bool)
    for i in range(pos.shape[1]):
        col = pos[:, i]
        close = np.abs(col[:, None] - col[None, :]) <= ps.sigma
        out[:, i] = close.sum(axis=1) < ps.mu
    return out


def never_lonely_particle(ps: ParticleSystem) -> int:
    """A particle that is never lonely, found through crowdedness checkpoints.

    A particle is crowded at time ``i`` if at least ``mu`` particles lie within
    ``sigma / 2`` of it.  Crowded particles cannot become lonely for
    ``sigma / (4 rho)`` steps, so checking crowdedness every
    ``ceil(sigma / (4 rho))`` steps suffices.
    """
    if not ps.speed_ok():
        raise PreconditionError("a particle moves faster than rho")
    if not ps.span_ok():
        raise PreconditionError("positions do not fit in an interval of length lam")
    if ps.tau > ps.max_horizon():
        raise PreconditionError(
            f"horizon tau={ps.tau} exceeds |R| sigma^2 / (8 mu rho lam) = {ps.max_horizon():.4g}")
    hop = max(1, math.ceil(ps.sigma / (4 * ps.rho)))
    checkpoints = range(0, ps.tau + 1, hop)
    crowded = np.ones(ps.size, dtype=bool)
    half = ps.sigma / 2
    for i in checkpoints:
        crowded &= neighbour_counts(ps.positions[:, i], half) >= ps.mu
    candidates = np.flatnonzero(crowded)
    if len(candidates) == 0:
        raise AssertionError("no never-lonely particle despite the horizon hypothesis")
    a = int(candidates[0])
    if lonely_mask(ps)[a].any():
        raise AssertionError(f"particle {a} was crowded at every checkpoint but is lonely")
    return a


def never_lonely_runs(ps: ParticleSystem) -> list[tuple[int, int, int]]:
    """Greedy cover of ``0..tau`` by never-lonely stretches.

    Returns ``(particle, start, stop)`` triples (``stop`` exclusive): from each
    start time the particle with the longest non-lonely run is taken (lowest
    id on ties).  Raises :class:`PreconditionError` if some time has no
    non-lonely particle at all.
    """
    lonely = lonely_mask(ps)
    tau = ps.tau
    runs = []
    start = 0
    while start <= tau:
        block = lonely[:, start:]
        ever = block.any(axis=1)
        first = np.where(ever, block.argmax(axis=1), tau + 1 - start)
        best = int(np.argmax(first))
        length = int(first[best])
        if length == 0:
            raise PreconditionError(f"every particle is lonely at time {start}")
        runs.append((best, start, start + length))
        start += length
    return runs


# --- pigeonhole -------------------------------------------------------------


def pigeonhole_bucket(items: Sequence, key: Callable[[object], Hashable]):
    """Most popular key and its bucket; ties go to the first key seen."""
    if not items:
        raise InputError("pigeonhole_bucket needs at least one item")
    buckets: dict = {}
    for it in items:
        buckets.setdefault(key(it), []).append(it)
    best = max(buckets, key=lambda kv: len(buckets[kv]))
    return best, buckets[best]



def greedy_separated_subsequence(p: Sequence[float], sigma: float) -> SeparatedSubsequence:
    """Indices ``0 = i_1 < ... < i_s = tau`` taking each next index as soon as it rises ``sigma``."""
    tau = len(p) - 1
    if tau < 0:
        raise InputError("empty sequence")
    if tau == 0 or p[tau] - p[0] < sigma:
        return SeparatedSubsequence((0, tau) if tau else (0,), degenerate=True)
    chosen = [0]
    for i in range(1, tau):
        if p[i] - p[chosen[-1]] >= sigma:
            chosen.append(i)
    while len(chosen) > 1 and p[tau] - p[chosen[-1]] < sigma:
        chosen.pop()
    chosen.append(tau)
    return SeparatedSubsequence(tuple(chosen))
