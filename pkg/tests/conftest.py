import itertools
import math

import numpy as np
import pytest


def brute_force_matching_cost(cost) -> int:
    """Minimum over all n! perfect matchings."""
    c = np.asarray(cost, dtype=np.int64)
    n = c.shape[0]
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return int(c[np.arange(n), perms].sum(axis=1).min())


def brute_force_order_cost(sizes) -> float:
    """Minimum total completion time over all n! orders."""
    best = math.inf
    for order in itertools.permutations(range(len(sizes))):
        t = total = 0
        for j in order:
            t += sizes[j]
            total += t
        best = min(best, total)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
