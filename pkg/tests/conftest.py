import itertools

import numpy as np
import pytest

from ramsey_witness.graph import build_graph


def brute_induced_edges(edges, subset):
    s = set(subset)
    return sum(1 for u, v in edges if u in s and v in s)


def brute_psi(n, edges):
    """All (|S|, e(S)) pairs by listing every subset."""
    out = set()
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            out.add((r, brute_induced_edges(edges, combo)))
    return out


def random_edges(rng, n, p=0.5):
    return [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def cycle5():
    return build_graph(5, [(i, (i + 1) % 5) for i in range(5)])
