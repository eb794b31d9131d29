"""Sum and average provisioning over positive weights.

Weights are rounded up to a geometric grid (1+eps')^l.  Per hypothetical,
tuples more than t buckets below that hypothetical's maximum are pruned
(they can contribute at most an eps' fraction of any scenario's sum), and
a distinct-count sketch is embedded per occupied grid interval.  The sum
estimate is the sum over intervals of the interval's upper weight bound
times its estimated tuple count; the average divides by an embedded full
count sketch.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .count import CountSketcher
from .exceptions import EmptyScenarioResult, InputError
from .hashing import child_seed
from .model import HypotheticalSet, Instance, Scenario, require_valid

_INTERVAL_STREAM = 0x53554D
_FULL_COUNT_STREAM = 0x53554D46


def bucket_of(weight: float, eps_prime: float) -> int:
    """Grid index l with (1+eps')^l <= weight < (1+eps')^(l+1).

    Computed in floating point with a boundary guard; weights below 1 get
    negative indices.
    """
    if not weight > 0:
        raise InputError(f"weight {weight} is not positive")
    base = 1.0 + eps_prime
    l = math.floor(math.log(weight) / math.log(base))
    while weight < base ** l:
        l -= 1
    while weight >= base ** (l + 1):
        l += 1
    return l


def grid_value(l: int, eps_prime: float) -> float:
    return (1.0 + eps_prime) ** l


class SumSketcher(BaseEstimator):
    """(epsilon, delta) provisioning of sum and average queries."""

    def __init__(self, epsilon: float = 0.2, delta: float = 0.1, seed: int = 0):
        self.epsilon = epsilon
        self.delta = delta
        self.seed = seed

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "SumSketcher":
        require_valid(instance, hypotheticals, positive_weights=True)
        if not 0 < self.epsilon <= 1:
            raise InputError("epsilon must be in (0, 1]")
        k = hypotheticals.k
        n = max(instance.n, 2)
        self.k_ = k
        self.n_ = instance.n
        self.eps_prime_ = self.epsilon / 4.0
        base = math.log(1.0 + self.eps_prime_)
        self.t_ = math.ceil(math.log(n / self.eps_prime_) / base)
        self.delta_prime_ = self.delta / (k * (self.t_ + 1))
        self.grid_bound_ = math.ceil(math.log(max(instance.weight_bound, 1.0 + self.eps_prime_)) / base)

        ids = np.sort(np.asarray([t.id for t in instance.tuples], dtype=np.int64))
        weight_by_id = {t.id: t.weight for t in instance.tuples}

        self.gammas_ = []
        interval_members: dict[int, list[np.ndarray]] = {}
        for hyp_index, members in enumerate(hypotheticals.member_sets):
            member_ids = sorted(members)
            if not member_ids:
                self.gammas_.append(None)
                continue
            weights = [weight_by_id[i] for i in member_ids]
            gamma = bucket_of(max(weights), self.eps_prime_)
            self.gammas_.append(gamma)
            floor_weight = grid_value(gamma - self.t_, self.eps_prime_)
            buckets: dict[int, list[int]] = {}
            for tid, w in zip(member_ids, weights):
                if w < floor_weight:
                    continue  # pruning step
                buckets.setdefault(bucket_of(w, self.eps_prime_), []).append(tid)
            for l, tids in buckets.items():
                slot = interval_members.setdefault(l, [np.array([], dtype=np.int64) for _ in range(k)])
                slot[hyp_index] = np.searchsorted(ids, np.asarray(tids, dtype=np.int64))

        self.intervals_ = {}
        # compression-side record of which dense ids landed in each interval;
        # not serialized and never read at extraction
        self.interval_dense_ = {l: interval_members[l] for l in sorted(interval_members)}
        for l in sorted(interval_members):
            sub = CountSketcher(self.eps_prime_, self.delta_prime_,
                                seed=child_seed(self.seed, _INTERVAL_STREAM, l))
            sub._fit_dense(instance.n, interval_members[l])
            self.intervals_[l] = sub

        self.full_count_ = CountSketcher(self.eps_prime_, self.delta_prime_,
                                         seed=child_seed(self.seed, _FULL_COUNT_STREAM))
        self.full_count_.fit(instance, hypotheticals)
        self.labels_ = hypotheticals.labels
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "intervals_"):
            raise InputError("sketch is not fitted")

    def estimate_sum(self, scenario: Scenario) -> float:
        """Estimated total weight of the scenario's instance."""
        self._check_fitted()
        scenario.check(self.k_)
        total = 0.0
        for l, sketch in self.intervals_.items():
            count = sketch.estimate(scenario)
            if count:
                total += grid_value(l + 1, self.eps_prime_) * count
        return total

    def estimate_count(self, scenario: Scenario) -> int:
        """Distinct count from the embedded full count sketch."""
        self._check_fitted()
        return self.full_count_.estimate(scenario)

    def estimate_average(self, scenario: Scenario) -> float:
        """Estimated average weight (sum estimate over count estimate)."""
        count = self.estimate_count(scenario)
        if count == 0:
            raise EmptyScenarioResult("count estimate is zero; average undefined")
        return self.estimate_sum(scenario) / count
