"""Immutable simple graphs on ``0..n-1`` with row-bitset adjacency.

Rows and vertex subsets are Python integers used as bitsets; bit ``v`` set
means vertex ``v`` is present.  ``int.bit_count`` gives word-parallel
popcounts, so every count here (``e(S)``, ``e(A, B)``, ``d_A(v)``) reduces to
an AND followed by a popcount.  A dense ``numpy`` view is available for
batched kernels (``Graph.matrix``).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InputError
from .rng import as_generator

BINARY_MAGIC = b"RWG1"


def _bits_of(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class VertexSet:
    """A subset of ``range(n)`` stored as an integer bitset."""

    n: int
    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.n:
            raise InputError(f"vertex set has ids outside [0, {self.n})")

    @classmethod
    def of(cls, n: int, vertices: Iterable[int]) -> "VertexSet":
        bits = 0
        for v in vertices:
            v = int(v)
            if not 0 <= v < n:
                raise InputError(f"vertex {v} outside [0, {n})")
            bits |= 1 << v
        return cls(n, bits)

    @classmethod
    def full(cls, n: int) -> "VertexSet":
        return cls(n, (1 << n) - 1)

    @classmethod
    def empty(cls, n: int) -> "VertexSet":
        return cls(n, 0)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __iter__(self) -> Iterator[int]:
        return _bits_of(self.bits)

    def __contains__(self, v: int) -> bool:
        return 0 <= v < self.n and bool(self.bits >> v & 1)

    def _check(self, other: "VertexSet"):
        if other.n != self.n:
            raise InputError("vertex sets over different universes")

    def __or__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.n, self.bits | other.bits)

    def __and__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.n, self.bits & other.bits)

    def __sub__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.n, self.bits & ~other.bits)

    def isdisjoint(self, other: "VertexSet") -> bool:
        self._check(other)
        return not self.bits & other.bits

    def complement(self) -> "VertexSet":
        return VertexSet(self.n, ((1 << self.n) - 1) & ~self.bits)

    def sorted(self) -> list[int]:
        return list(_bits_of(self.bits))

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.sorted()] = True
        return out

    def __repr__(self) -> str:
        return f"VertexSet(n={self.n}, {self.sorted()})"


@dataclass(frozen=True)
class KTuple:
    """A k-set of vertices, kept as a strictly increasing tuple."""

    vertices: tuple[int, ...]

    def __post_init__(self):
        vs = self.vertices
        if not vs:
            raise InputError("a k-tuple needs at least one vertex")
        if any(a >= b for a, b in zip(vs, vs[1:])):
            raise InputError(f"k-tuple vertices must be strictly increasing: {vs}")
        if vs[0] < 0:
            raise InputError("negative vertex id")

    @classmethod
    def of(cls, vertices: Iterable[int]) -> "KTuple":
        vs = sorted(int(v) for v in vertices)
        if len(set(vs)) != len(vs):
            raise InputError(f"repeated vertex in k-tuple {vs}")
        return cls(tuple(vs))

    @property
    def k(self) -> int:
        return len(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.vertices)

    def mask(self) -> int:
        m = 0
        for v in self.vertices:
            m |= 1 << v
        return m


class MultiSetNbhd(Mapping[int, int]):
    """Multiset neighbourhood: vertex -> multiplicity (zeros omitted)."""

    __slots__ = ("_mult",)

    def __init__(self, mult: Mapping[int, int] | None = None):
        clean = {}
        for w, m in (mult or {}).items():
            if m < 0:
                raise InputError("negative multiplicity")
            if m:
                clean[int(w)] = int(m)
        self._mult = clean

    def __getitem__(self, w: int) -> int:
        return self._mult.get(w, 0)

    def __iter__(self):
        return iter(self._mult)

    def __len__(self) -> int:
        return len(self._mult)

    def __contains__(self, w) -> bool:
        return w in self._mult

    @property
    def mass(self) -> int:
        return sum(self._mult.values())

    def __eq__(self, other) -> bool:
        if isinstance(other, MultiSetNbhd):
            return self._mult == other._mult
        return NotImplemented

    def __repr__(self) -> str:
        return f"MultiSetNbhd({dict(sorted(self._mult.items()))})"


class Graph:
    """Immutable simple graph with bitset rows.

    Build with :func:`build_graph`, :func:`gnp_half` or the readers below;
    the constructor trusts its input and only checks the cheap invariants.
    """

    __slots__ = ("n", "adj", "edge_count", "_matrix")

    def __init__(self, n: int, adj: Sequence[int]):
        if len(adj) != n:
            raise InputError("adjacency must have one row per vertex")
        rows = tuple(int(r) for r in adj)
        total = 0
        for v, r in enumerate(rows):
            if r >> v & 1:
                raise InputError(f"self-loop at vertex {v}")
            if r < 0 or r >> n:
                raise InputError(f"row {v} has bits outside [0, {n})")
            total += r.bit_count()
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "adj", rows)
        object.__setattr__(self, "edge_count", total // 2)
        object.__setattr__(self, "_matrix", None)

    def __setattr__(self, name, value):
        raise AttributeError("Graph is immutable")

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.adj == other.adj

    def __hash__(self) -> int:
        return hash((self.n, self.adj))

    @property
    def matrix(self) -> np.ndarray:
        """Dense read-only ``uint8`` adjacency matrix (cached)."""
        if self._matrix is None:
            nbytes = (self.n + 7) // 8
            buf = b"".join(r.to_bytes(nbytes, "little") for r in self.adj)
            raw = np.frombuffer(buf, dtype=np.uint8).reshape(self.n, nbytes)
            m = np.unpackbits(raw, axis=1, count=self.n, bitorder="little")
            m.setflags(write=False)
            object.__setattr__(self, "_matrix", m)
        return self._matrix

    def degrees(self) -> list[int]:
        return [r.bit_count() for r in self.adj]

    def neighbours(self, v: int) -> VertexSet:
        return VertexSet(self.n, self.adj[v])

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u] >> v & 1)

    def edges(self) -> Iterator[tuple[int, int]]:
        for u, r in enumerate(self.adj):
            for v in _bits_of(r >> (u + 1)):
                yield u, u + 1 + v

    def complement(self) -> "Graph":
        full = (1 << self.n) - 1
        return Graph(self.n, [full & ~r & ~(1 << v) for v, r in enumerate(self.adj)])

    def induced(self, s: VertexSet) -> tuple["Graph", list[int]]:
        """Induced subgraph relabelled to ``0..|s|-1`` plus the id map."""
        verts = s.sorted()
        pos = {v: i for i, v in enumerate(verts)}
        rows = []
        for v in verts:
            r = 0
            for w in _bits_of(self.adj[v] & s.bits):
                r |= 1 << pos[w]
            rows.append(r)
        return Graph(len(verts), rows), verts

    def content_hash(self) -> str:
        return hashlib.sha256(to_binary(self)).hexdigest()


def build_graph(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    """Graph on ``n`` vertices from an edge list; duplicate edges are merged."""
    if n < 0:
        raise InputError("n must be nonnegative")
    rows = [0] * n
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise InputError(f"edge ({u}, {v}) outside [0, {n})")
        if u == v:
            raise InputError(f"self-loop at vertex {u}")
        rows[u] |= 1 << v
        rows[v] |= 1 << u
    return Graph(n, rows)


def from_matrix(m: np.ndarray) -> Graph:
    m = np.asarray(m).astype(bool)
    n = m.shape[0]
    if m.shape != (n, n):
        raise InputError("adjacency matrix must be square")
    if np.any(m != m.T):
        raise InputError("adjacency matrix must be symmetric")
    if np.any(np.diagonal(m)):
        raise InputError("adjacency matrix has self-loops")
    packed = np.packbits(m, axis=1, bitorder="little")
    return Graph(n, [int.from_bytes(row.tobytes(), "little") for row in packed])


def gnp_half(n: int, seed) -> Graph:
    """Sample G(n, 1/2): every pair independently present with probability 1/2."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = as_generator(seed, "gnp_half", n)
    upper = np.triu(rng.random((n, n)) < 0.5, k=1)
    return from_matrix(upper | upper.T)


def complete_graph(n: int) -> Graph:
    return from_matrix(~np.eye(n, dtype=bool))


def empty_graph(n: int) -> Graph:
    return Graph(n, [0] * n)


# --- counting kernels -------------------------------------------------------


def induced_edges(g: Graph, s: VertexSet) -> int:
    """``e(S)``: number of edges with both ends in ``s``."""
    bits = s.bits
    adj = g.adj
    return sum((adj[v] & bits).bit_count() for v in _bits_of(bits)) // 2


def cross_edges(g: Graph, a: VertexSet, b: VertexSet) -> int:
    """``e(A, B)`` for disjoint ``a`` and ``b``."""
    if a.bits & b.bits:
        raise InputError("cross_edges needs disjoint vertex sets")
    if a.size > b.size:
        a, b = b, a
    bits = b.bits
    adj = g.adj
    return sum((adj[v] & bits).bit_count() for v in _bits_of(a.bits))


def degree_into(g: Graph, v: int, a: VertexSet) -> int:
    """``d_A(v) = |N(v) ∩ A|``."""
    if not 0 <= v < g.n:
        raise InputError(f"vertex {v} outside [0, {g.n})")
    return (g.adj[v] & a.bits).bit_count()


def tuple_degree_into(g: Graph, t: KTuple, a: VertexSet) -> int:
    """``d_A(t)``: sum of the degrees into ``a`` of the vertices of ``t``."""
    bits = a.bits
    return sum((g.adj[v] & bits).bit_count() for v in t.vertices)


def tuple_nbhd(g: Graph, t: KTuple, a: VertexSet) -> MultiSetNbhd:
    """Multiset union of ``N(v) ∩ A`` over ``v`` in ``t``."""
    mult: dict[int, int] = {}
    for v in t.vertices:
        for w in _bits_of(g.adj[v] & a.bits):
            mult[w] = mult.get(w, 0) + 1
    return MultiSetNbhd(mult)


def multiset_sym_diff_size(x: Mapping[int, int], y: Mapping[int, int]) -> int:
    """Number of elements whose multiplicities in ``x`` and ``y`` differ."""
    keys = set(x) | set(y)
    return sum(1 for w in keys if x.get(w, 0) != y.get(w, 0))


def common_neighbourhood(g: Graph, t: KTuple) -> VertexSet:
    """Intersection of ``N(v)`` over ``v`` in ``t``."""
    it = iter(t.vertices)
    bits = g.adj[next(it)]
    for v in it:
        bits &= g.adj[v]
    return VertexSet(g.n, bits)


common_neighborhood = common_neighbourhood


# --- numpy helpers used by the batched kernels ------------------------------


def degree_vector(g: Graph, s: VertexSet) -> np.ndarray:
    """``d_S(v)`` for every vertex ``v`` as an int64 array."""
    return g.matrix[:, s.indicator()].sum(axis=1, dtype=np.int64)


def tuple_mult_vectors(g: Graph, tuples: Sequence[KTuple], a: VertexSet) -> np.ndarray:
    """Row ``i`` holds the multiplicity vector of ``N_A(tuples[i])`` over ``a``."""
    cols = np.asarray(a.sorted(), dtype=np.int64)
    m = g.matrix
    out = np.zeros((len(tuples), len(cols)), dtype=np.int16)
    for i, t in enumerate(tuples):
        out[i] = m[np.asarray(t.vertices)][:, cols].sum(axis=0)
    return out


def pairwise_mismatch(vectors: np.ndarray) -> np.ndarray:
    """``out[i, j]`` = number of coordinates where rows ``i`` and ``j`` differ."""
    vectors = np.asarray(vectors)
    r = len(vectors)
    out = np.zeros((r, r), dtype=np.int64)
    for i in range(r):
        out[i] = (vectors != vectors[i]).sum(axis=1)
    return out


# --- file formats -----------------------------------------------------------


def to_edge_list(g: Graph) -> str:
    edges = list(g.edges())
    lines = [f"{g.n} {len(edges)}"]
    lines.extend(f"{u} {v}" for u, v in edges)
    return "\n".join(lines) + "\n"


def from_edge_list(text: str) -> Graph:
    tokens = text.split()
    if len(tokens) < 2:
        raise InputError("edge list needs a header line 'n m'")
    try:
        nums = [int(t) for t in tokens]
    except ValueError as exc:
        raise InputError(f"non-integer token in edge list: {exc}") from None
    n, m = nums[0], nums[1]
    body = nums[2:]
    if len(body) != 2 * m:
        raise InputError(f"header promises {m} edges, found {len(body) / 2:g}")
    return build_graph(n, zip(body[0::2], body[1::2]))


def to_binary(g: Graph) -> bytes:
    words = (g.n + 63) // 64
    parts = [BINARY_MAGIC, struct.pack("<Q", g.n)]
    parts.extend(r.to_bytes(8 * words, "little") for r in g.adj)
    return b"".join(parts)


def from_binary(data: bytes) -> Graph:
    if data[:4] != BINARY_MAGIC:
        raise InputError("missing RWG1 magic")
    if len(data) < 12:
        raise InputError("truncated header")
    (n,) = struct.unpack("<Q", data[4:12])
    width = 8 * ((n + 63) // 64)
    if len(data) != 12 + n * width:
        raise InputError("binary graph has the wrong length")
    rows = [int.from_bytes(data[12 + i * width: 12 + (i + 1) * width], "little") for i in range(n)]
    g = Graph(n, rows)
    for u, r in enumerate(rows):
        for v in _bits_of(r):
            if not rows[v] >> u & 1:
                raise InputError(f"asymmetric adjacency at ({u}, {v})")
    return g


def read_graph(path) -> Graph:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == BINARY_MAGIC:
        return from_binary(data)
    return from_edge_list(data.decode("utf-8"))


def write_graph(g: Graph, path, fmt: str = "binary") -> None:
    if fmt == "binary":
        payload = to_binary(g)
    elif fmt == "edgelist":
        payload = to_edge_list(g).encode("utf-8")
    else:
        raise InputError(f"unknown graph format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(payload)
