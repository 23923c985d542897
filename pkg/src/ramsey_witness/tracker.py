"""Incremental bookkeeping for one-vertex-at-a-time switching of a set W."""

from __future__ import annotations

from typing import Sequence

from .errors import InputError
from .graph import Graph, KTuple, VertexSet, cross_edges, induced_edges, tuple_degree_into


class SwitchTracker:
    """Tracks ``e(W)``, ``e(W, U)`` and ``d_W(t)`` for registered tuples.

    Single-owner mutable state: do not share one tracker between threads.
    """

    def __init__(self, g: Graph, w: VertexSet, side: VertexSet | None = None,
                 tuples: Sequence[KTuple] = ()):
        self.g = g
        self.side = side if side is not None else VertexSet.empty(g.n)
        if not w.isdisjoint(self.side):
            raise InputError("tracked set and side set must be disjoint")
        self.tuples = list(tuples)
        self._bits = w.bits
        self.edges = induced_edges(g, w)
        self.cross = cross_edges(g, w, self.side)
        self.tuple_degrees = [tuple_degree_into(g, t, w) for t in self.tuples]

    @property
    def current(self) -> VertexSet:
        return VertexSet(self.g.n, self._bits)

    def __contains__(self, v: int) -> bool:
        return bool(self._bits >> v & 1)

    def swap(self, out_v: int, in_v: int) -> "SwitchTracker":
        """Replace ``out_v`` by ``in_v`` in the tracked set, in place."""
        bits = self._bits
        if not bits >> out_v & 1:
            raise InputError(f"vertex {out_v} is not in the tracked set")
        if bits >> in_v & 1:
            raise InputError(f"vertex {in_v} is already in the tracked set")
        if self.side.bits >> in_v & 1:
            raise InputError(f"vertex {in_v} belongs to the side set")
        adj = self.g.adj
        rest = bits & ~(1 << out_v)
        self.edges += (adj[in_v] & rest).bit_count() - (adj[out_v] & rest).bit_count()
        side = self.side.bits
        self.cross += (adj[in_v] & side).bit_count() - (adj[out_v] & side).bit_count()
        out_bit, in_bit = 1 << out_v, 1 << in_v
        for j, t in enumerate(self.tuples):
            delta = 0
            for v in t.vertices:
                r = adj[v]
                delta += bool(r & in_bit) - bool(r & out_bit)
            self.tuple_degrees[j] += delta
        self._bits = rest | in_bit
        return self

    def recount(self) -> tuple[int, int, list[int]]:
        """From-scratch values of ``(e(W), e(W, U), [d_W(t)])``."""
        w = self.current
        return (
            induced_edges(self.g, w),
            cross_edges(self.g, w, self.side),
            [tuple_degree_into(self.g, t, w) for t in self.tuples],
        )

    def consistent(self) -> bool:
        return self.recount() == (self.edges, self.cross, self.tuple_degrees)
