"""Random variables of the form ``offset + sum(a[i] for i in I)``.

``I`` is a uniformly random subset of ``range(n)`` of fixed size.  Such a
variable is said to have (n, p, b)-hypergeometric type when every
``|a[i]| <= b`` and ``p = |I| / n``.  This module samples them, computes
their exact law for small ``n``, and evaluates the tail bound used by the
pipeline audits.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .errors import CapacityError, InputError, PreconditionError
from .rng import as_generator

ENUMERATION_LIMIT = 10**6
# Constant in the exponent of the tail bound; conservative relative to the
# Hoeffding/Serfling bound 2 exp(-t^2 / (2 n b^2 min(p, 1-p))).
CONCENTRATION_C = 1 / 8

_CHUNK = 1 << 16


@dataclass(frozen=True)
class HypergeomRV:
    weights: tuple
    subset_size: int
    b: float | None = None
    offset: float | int | Fraction = 0
    r: int = field(init=False)

    def __post_init__(self):
        weights = tuple(self.weights)
        object.__setattr__(self, "weights", weights)
        n = len(weights)
        if not 0 <= self.subset_size <= n:
            raise InputError(f"subset size {self.subset_size} outside [0, {n}]")
        biggest = max((abs(a) for a in weights), default=0)
        if self.b is None:
            object.__setattr__(self, "b", biggest)
        elif biggest > self.b:
            raise InputError(f"weight of size {biggest} exceeds declared bound b={self.b}")
        if self.b > 0:
            r = sum(1 for a in weights if abs(a) * self.b >= 1)
        else:
            r = 0
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def p(self) -> Fraction:
        return Fraction(self.subset_size, self.n) if self.n else Fraction(0)

    @property
    def mean(self):
        """``offset + p * sum(a)``, exact when the inputs are exact."""
        total = sum(_exact(a) for a in self.weights)
        return _exact(self.offset) + self.p * total

    def translate(self, shift) -> "HypergeomRV":
        return HypergeomRV(self.weights, self.subset_size, self.b, self.offset + shift)

    def is_integer_valued(self) -> bool:
        return all(_is_integral(a) for a in self.weights) and _is_integral(self.offset)


def _exact(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Rational):
        return Fraction(x)
    return Fraction(float(x))


def _is_integral(x) -> bool:
    return Fraction(_exact(x)).denominator == 1


def _partial_fisher_yates(rng: np.random.Generator, n: int, k: int, rows: int) -> np.ndarray:
    """First ``k`` entries of ``rows`` independent uniform permutations of ``range(n)``."""
    idx = np.tile(np.arange(n, dtype=np.int32), (rows, 1))
    ar = np.arange(rows)
    for j in range(k):
        pick = rng.integers(j, n, size=rows)
        tmp = idx[ar, j].copy()
        idx[ar, j] = idx[ar, pick]
        idx[ar, pick] = tmp
    return idx[:, :k]


def sample(rv: HypergeomRV, seed) -> float:
    """One draw of ``rv`` using a partial Fisher-Yates shuffle."""
    rng = as_generator(seed, "hypergeom.sample")
    n, k = rv.n, rv.subset_size
    perm = list(range(n))
    total = 0
    for j in range(k):
        pick = int(rng.integers(j, n))
        perm[j], perm[pick] = perm[pick], perm[j]
        total += rv.weights[perm[j]]
    return rv.offset + total


def sample_many(rv: HypergeomRV, count: int, seed) -> np.ndarray:
    """``count`` independent draws as a float64 array."""
    rng = as_generator(seed, "hypergeom.sample_many")
    a = np.asarray(rv.weights, dtype=np.float64)
    n, k = rv.n, rv.subset_size
    total = float(a.sum())
    # Drawing the smaller of I and its complement halves the shuffle work.
    use_complement = n - k < k
    draw = n - k if use_complement else k
    out = np.empty(count, dtype=np.float64)
    done = 0
    while done < count:
        rows = min(_CHUNK, count - done)
        if draw == 0:
            s = np.zeros(rows)
        else:
            s = a[_partial_fisher_yates(rng, n, draw, rows)].sum(axis=1)
        out[done:done + rows] = total - s if use_complement else s
        done += rows
    return out + float(rv.offset)


def exact_distribution(rv: HypergeomRV) -> dict:
    """Exact law of ``rv`` as ``{value: Fraction probability}``.

    Values are exact rationals (ints where possible).  Counting is done by a
    subset-sum recursion over the items, which visits the same multiset of
    subset sums as listing all ``C(n, k)`` subsets.
    """
    n, k = rv.n, rv.subset_size
    total_subsets = math.comb(n, k)
    if total_subsets > ENUMERATION_LIMIT:
        raise CapacityError(f"C({n}, {k}) = {total_subsets} exceeds {ENUMERATION_LIMIT}")
    exact = [_exact(a) for a in rv.weights]
    denom = math.lcm(*(Fraction(a).denominator for a in exact)) if exact else 1
    scaled = [int(Fraction(a) * denom) for a in exact]
    # layers[j] maps scaled sum -> number of j-subsets of the items seen so far
    layers = [Counter({0: 1})] + [Counter() for _ in range(k)]
    for a in scaled:
        for j in range(k, 0, -1):
            prev = layers[j - 1]
            if prev:
                cur = layers[j]
                for s, c in prev.items():
                    cur[s + a] += c
    offset = _exact(rv.offset)
    out = {}
    for s, c in layers[k].items():
        value = offset + Fraction(s, denom)
        if value.denominator == 1:
            value = int(value)
        out[value] = Fraction(c, total_subsets)
    assert sum(layers[k].values()) == total_subsets
    return out


def concentration_bound(n: int, p, b: float, t: float) -> float:
    """Upper bound on ``P(|X - E X| >= t)`` for (n, p, b)-hypergeometric ``X``.

    Returns ``min(1, 2 exp(-t^2 / (8 n b^2 min(p, 1-p))))``.  When ``p`` is 0
    or 1 (or ``b == 0``) the variable is constant and the exact indicator
    ``[t == 0]`` is returned.
    """
    if t < 0:
        raise InputError("deviation t must be nonnegative")
    p = float(p)
    if not 0 <= p <= 1:
        raise InputError("p must lie in [0, 1]")
    spread = n * b * b * min(p, 1 - p)
    if spread == 0:
        return 1.0 if t == 0 else 0.0
    return min(1.0, 2.0 * math.exp(-CONCENTRATION_C * t * t / spread))


def point_mass_scale(n: int, p) -> float:
    """The ``1 / sqrt(p (1-p) n)`` scale governing single-value probabilities."""
    p = float(p)
    return 1.0 / math.sqrt(p * (1 - p) * n)


def empirical_point_mass(rv: HypergeomRV, x, trials: int, seed) -> float:
    """Fraction of ``trials`` draws that land exactly on ``x``."""
    if trials < 1:
        raise InputError("trials must be at least 1")
    if not rv.is_integer_valued():
        raise InputError("point masses are only defined here for integer weights")
    draws = sample_many(rv, trials, seed)
    return float(np.count_nonzero(np.rint(draws) == x)) / trials


def empirical_max_point_mass(rv: HypergeomRV, trials: int, seed) -> float:
    """Largest empirical point mass over all observed values."""
    if not rv.is_integer_valued():
        raise InputError("point masses are only defined here for integer weights")
    draws = np.rint(sample_many(rv, trials, seed)).astype(np.int64)
    _, counts = np.unique(draws, return_counts=True)
    return float(counts.max()) / trials


def symmetry_check(rv: HypergeomRV) -> bool:
    """True iff the exact law of ``rv`` is symmetric about its mean.

    Requires ``p = 1/2`` exactly.
    """
    if rv.n == 0 or 2 * rv.subset_size != rv.n:
        raise PreconditionError("symmetry_check needs n even and subset_size = n/2")
    pmf = exact_distribution(rv)
    centre2 = 2 * rv.mean
    return all(pmf.get(centre2 - v, 0) == q for v, q in pmf.items())


def tail_frequency(draws: np.ndarray, centre: float, t: float) -> float:
    return float(np.count_nonzero(np.abs(draws - centre) >= t)) / len(draws)


def from_weights(weights: Sequence, subset_size: int, **kw) -> HypergeomRV:
    return HypergeomRV(tuple(weights), subset_size, **kw)
