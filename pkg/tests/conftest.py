"""Shared generators for randomized suites.

Every generator takes an explicit numpy Generator so suites are seeded and
reproducible; hypotheticals are drawn as random id subsets and may overlap.
"""

import numpy as np
import pytest

from provkit.model import HypotheticalSet, Instance, RegRow, Tuple


def make_aggregate_instance(rng, n, low=1.0, high=1000.0):
    weights = rng.uniform(low, high, size=n)
    return Instance([Tuple(i + 1, float(weights[i])) for i in range(n)])


def make_regression_instance(rng, n, d, noise=1.0, consistent=False):
    a = rng.normal(size=(n, d))
    x_true = rng.normal(size=d)
    b = a @ x_true
    if not consistent:
        b = b + noise * rng.normal(size=n)
    return Instance([RegRow(i + 1, tuple(a[i]), float(b[i])) for i in range(n)])


def make_hypotheticals(rng, ids, k, min_frac=0.25, max_frac=0.5):
    ids = list(ids)
    members = []
    for _ in range(k):
        size = int(rng.integers(max(1, int(len(ids) * min_frac)),
                                max(2, int(len(ids) * max_frac)) + 1))
        members.append(sorted(int(i) for i in rng.choice(ids, size=size, replace=False)))
    return HypotheticalSet(members)


def union_ids(hypotheticals, scenario):
    out = set()
    for i in scenario.on:
        out |= hypotheticals.member(i)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
