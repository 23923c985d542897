"""Randomized property suites for the lemma routines and the hypergeometric toolkit.

Each suite draws its own instances from a named stream, checks the stated
postconditions against an independent recount, and returns a
:class:`SuiteResult`.  The CLI ``lemma-test`` command and the acceptance
tests share these.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import VertexSet, from_matrix
from .hypergeom import (HypergeomRV, concentration_bound, empirical_max_point_mass,
                        sample_many, symmetry_check, tail_frequency)
from .lemmas import (Hypergraph, ParticleSystem, is_independent, lonely_mask_bruteforce,
                     never_lonely_particle, sunflower_extract, turan_bound,
                     turan_independent_set, well_separated_bound, well_separated_subsequence)
from .rng import stream


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: list = field(default_factory=list)
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials, "failures": self.failures[:20],
                "failure_count": len(self.failures), "passed": self.passed,
                "stats": self.stats}


def _timed(fn):
    def run(*args, **kwargs) -> SuiteResult:
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _random_graph(rng: np.random.Generator, n: int):
    p = rng.uniform(0.02, 0.9)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return from_matrix((upper | upper.T).astype(np.uint8))


@_timed
def turan_suite(trials: int, seed: int, max_n: int = 64) -> SuiteResult:
    """Independence and the ``ceil(sum 1/(d+1))`` size bound."""
    res = SuiteResult("turan", trials)
    for t in range(trials):
        rng = stream(seed, "suite.turan", t)
        g = _random_graph(rng, int(rng.integers(1, max_n + 1)))
        s = turan_independent_set(g)
        members = s.sorted()
        # pairwise scan, independent of the bitset check used inside the routine
        clash = any(g.has_edge(u, v) for i, u in enumerate(members) for v in members[i + 1:])
        bound = math.ceil(turan_bound(g))
        if clash or not is_independent(g, s) or s.size < bound:
            res.failures.append({"trial": t, "n": g.n, "size": s.size, "bound": bound,
                                 "independent": not clash})
    return res


@_timed
def sunflower_suite(trials: int, seed: int, max_k: int = 4, max_m: int = 10_000) -> SuiteResult:
    """Common pairwise intersections and the ``max(1, floor(m^(1/k) / k))`` petal bound."""
    res = SuiteResult("sunflower", trials)
    for t in range(trials):
        rng = stream(seed, "suite.sunflower", t)
        k = int(rng.integers(1, max_k + 1))
        target = int(math.exp(rng.uniform(0, math.log(max_m))))
        # small universes force overlaps, large ones give matchings
        universe = int(rng.integers(k, max(k + 1, 4 * k * round(target ** (1 / k)) + 2)))
        rows = np.sort(np.argsort(rng.random((target, universe)), axis=1)[:, :k], axis=1) \
            if universe <= 64 else _draw_k_sets(rng, universe, k, target)
        h = Hypergraph.of(k, rows.tolist())
        flower = sunflower_extract(h)
        edges = flower.edges()
        known = set(h.edges)
        ok = all(e in known for e in edges)
        ok &= all(a & b == flower.kernel for i, a in enumerate(edges) for b in edges[i + 1:])
        bound = max(1, int(math.floor(h.m ** (1 / k) / k + 1e-12)))
        while (bound * k) ** k > h.m and bound > 1:  # guard the float root
            bound -= 1
        if not ok or len(flower.petals) < bound:
            res.failures.append({"trial": t, "k": k, "m": h.m, "petals": len(flower.petals),
                                 "bound": bound, "valid": ok})
    return res


def _draw_k_sets(rng: np.random.Generator, universe: int, k: int, count: int) -> np.ndarray:
    draw = np.sort(rng.integers(0, universe, size=(count, k)), axis=1)
    keep = np.all(np.diff(draw, axis=1) > 0, axis=1) if k > 1 else np.ones(count, bool)
    out = draw[keep]
    return out if len(out) else np.arange(k)[None, :]


@_timed
def well_separated_suite(trials: int, seed: int) -> SuiteResult:
    """Endpoints, gaps of at least ``sigma`` and the ``lambda/(rho+sigma) - kappa/rho`` length bound."""
    res = SuiteResult("well_separated", trials)
    for t in range(trials):
        rng = stream(seed, "suite.well_separated", t)
        tau = int(rng.integers(1, 200))
        rho = float(rng.uniform(0.5, 10))
        sigma = float(rng.uniform(0.05, 1)) * rho
        steps = rng.normal(rng.uniform(-0.5, 2), rng.uniform(0.1, 3), size=tau) * rho
        if rng.random() < 0.2:  # occasional big jumps exercise the kappa term
            steps[rng.integers(0, tau)] += rng.uniform(1, 5) * rho
        p = np.concatenate([[0.0], np.cumsum(steps)])
        if p[-1] < p[0]:
            p = p[::-1].copy()
        if rng.random() < 0.5:
            p = np.round(p)
        out = well_separated_subsequence(p.tolist(), rho, sigma)
        idx = out.indices
        lam = p[-1] - p[0]
        ok = idx[0] == 0 and idx[-1] == tau and all(a < b for a, b in zip(idx, idx[1:]))
        if lam >= sigma:
            ok &= not out.degenerate
            ok &= all(p[b] - p[a] >= sigma for a, b in zip(idx, idx[1:]))
            ok &= len(idx) >= well_separated_bound(p.tolist(), rho, sigma)
        else:
            ok &= out.degenerate
        if not ok:
            res.failures.append({"trial": t, "tau": tau, "rho": rho, "sigma": sigma,
                                 "indices": list(idx)})
    return res


def _particle_system(rng: np.random.Generator) -> ParticleSystem:
    size = int(rng.integers(20, 300))
    rho = int(rng.integers(1, 3))
    sigma = float(rng.integers(2, 12))
    lam = int(rng.integers(int(sigma) + 1, 60))
    horizon_at_mu1 = size * sigma ** 2 / (8 * rho * lam)
    mu = int(rng.integers(1, max(2, int(horizon_at_mu1) // 2 + 1)))
    tau = max(0, int(size * sigma ** 2 / (8 * mu * rho * lam)))
    tau = int(rng.integers(0, tau + 1))
    clusters = rng.integers(0, lam + 1, size=int(rng.integers(1, 6)))
    pos = np.empty((size, tau + 1), dtype=np.int64)
    pos[:, 0] = clusters[rng.integers(0, len(clusters), size=size)]
    for i in range(1, tau + 1):
        pos[:, i] = np.clip(pos[:, i - 1] + rng.integers(-rho, rho + 1, size=size), 0, lam)
    return ParticleSystem(pos, rho, sigma, mu, lam)


@_timed
def never_lonely_suite(trials: int, seed: int) -> SuiteResult:
    """The returned particle has ``mu`` companions within ``sigma`` at every time (brute force)."""
    res = SuiteResult("never_lonely", trials)
    for t in range(trials):
        ps = _particle_system(stream(seed, "suite.never_lonely", t))
        try:
            a = never_lonely_particle(ps)
            ok = not lonely_mask_bruteforce(ps)[a].any()
        except AssertionError as exc:
            a, ok = repr(exc), False
        if not ok:
            res.failures.append({"trial": t, "particle": a, "size": ps.size, "tau": ps.tau})
    return res


@_timed
def symmetry_suite(trials: int, seed: int, max_n: int = 12) -> SuiteResult:
    """Exact law at ``p = 1/2`` is symmetric about its mean."""
    res = SuiteResult("hypergeom_symmetry", trials)
    for t in range(trials):
        rng = stream(seed, "suite.symmetry", t)
        n = 2 * int(rng.integers(1, max_n // 2 + 1))
        if rng.random() < 0.5:
            weights = rng.integers(-20, 21, size=n).tolist()
        else:
            weights = [Fraction(int(a), int(b)) for a, b in
                       zip(rng.integers(-30, 31, size=n), rng.integers(1, 7, size=n))]
        rv = HypergeomRV(tuple(weights), n // 2)
        if not symmetry_check(rv):
            res.failures.append({"trial": t, "weights": [str(w) for w in weights]})
    return res


@_timed
def tail_suite(trials: int, seed: int, samples: int = 100_000) -> SuiteResult:
    """Empirical two-sided tails stay below the bound plus three standard errors."""
    res = SuiteResult("hypergeom_tails", trials)
    worst = -math.inf
    for t in range(trials):
        rng = stream(seed, "suite.tails", t)
        n = int(rng.integers(10, 101))
        k = int(rng.integers(1, n))
        b = float(rng.uniform(0.5, 3))
        weights = tuple(rng.uniform(-b, b, size=n).tolist())
        rv = HypergeomRV(weights, k, b)
        draws = sample_many(rv, samples, rng)
        mean = float(rv.mean)
        sd = float(draws.std())
        for mult in (0.5, 1.0, 2.0, 3.0):
            dev = mult * max(sd, 1e-9)
            freq = tail_frequency(draws, mean, dev)
            bound = concentration_bound(n, Fraction(k, n), b, dev)
            se = math.sqrt(max(freq * (1 - freq), 1 / samples) / samples)
            worst = max(worst, freq - bound)
            if freq > bound + 3 * se:
                res.failures.append({"trial": t, "n": n, "k": k, "t": dev, "freq": freq,
                                     "bound": bound})
    res.stats["max_excess"] = worst
    return res


@_timed
def point_mass_suite(seed: int, samples: int = 1_000_000, sizes=(100, 400),
                     window=(1.6, 2.6)) -> SuiteResult:
    """Quadrupling ``n`` divides the largest point mass by about two."""
    res = SuiteResult("hypergeom_point_mass", 1)
    masses = []
    for n in sizes:
        weights = tuple([0, 1] * (n // 2))
        rv = HypergeomRV(weights, n // 2)
        masses.append(empirical_max_point_mass(rv, samples, stream(seed, "suite.point_mass", n)))
    ratio = masses[0] / masses[1]
    res.stats.update({"masses": masses, "ratio": ratio, "window": list(window)})
    if not window[0] <= ratio <= window[1]:
        res.failures.append({"ratio": ratio})
    return res


def lemma_suites(trials: int, seed: int) -> list[SuiteResult]:
    """Lemma routines at ``trials`` instances each (well-separated gets ten times as many)."""
    return [turan_suite(trials, seed), sunflower_suite(trials, seed),
            well_separated_suite(10 * trials, seed), never_lonely_suite(trials, seed)]


def hypergeom_suites(trials: int, seed: int, samples: int = 100_000,
                     point_samples: int = 1_000_000) -> list[SuiteResult]:
    return [symmetry_suite(5 * trials, seed), tail_suite(trials, seed, samples),
            point_mass_suite(seed, point_samples)]
