"""Quantile and rank provisioning with multiplicative rank guarantees.

Tuples are ordered by (weight, id).  Compression records, per hypothetical
and per geometric rank-grid point r_j: the ceil(r_j) smallest tuples when
r_j <= t, and otherwise the (1+3eps')t smallest among tuples sampled with
probability t/r_j.  Every record carries a k-bit characteristic vector of
its hypothetical memberships so that extraction can keep a sampled tuple
only at its smallest turned-on index (deduplication), which makes the
union of samples behave like one Bernoulli(t/r) sample of the scenario's
instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .count import CountSketcher
from .exceptions import EmptyScenarioResult, InputError
from .hashing import child_seed, coin_uniform
from .model import HypotheticalSet, Instance, Scenario, Tuple, require_valid

_COUNT_STREAM = 0x51544C43
_SAMPLE_STREAM = 0x51544C53


@dataclass(frozen=True)
class QuantileAnswer:
    value: Tuple
    degraded: bool = False


@dataclass(frozen=True)
class RankAnswer:
    rank: int
    degraded: bool = False


def rank_index(r: float) -> int:
    """Integer rank targeted by a real grid value (1-based, fuzz-guarded)."""
    return max(1, math.ceil(r - 1e-9))


class QuantileSketcher(BaseEstimator):
    """(epsilon, delta) provisioning of quantile and rank queries.

    The quantile parameter phi is supplied at extraction time only.  Pass an
    explicit ``t`` to override the derived sample-size threshold (tests use
    this to reach the sampled branch at small scale).
    """

    def __init__(self, epsilon: float = 0.25, delta: float = 0.1, seed: int = 0,
                 t: int | None = None):
        self.epsilon = epsilon
        self.delta = delta
        self.seed = seed
        self.t = t

    # -- compression ----------------------------------------------------

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "QuantileSketcher":
        require_valid(instance, hypotheticals, positive_weights=True)
        if not 0 < self.epsilon <= 1:
            raise InputError("epsilon must be in (0, 1]")
        k = hypotheticals.k
        if k > 64:
            raise InputError("characteristic vectors support at most 64 hypotheticals")
        n = max(instance.n, 2)
        self.k_ = k
        self.n_ = instance.n
        self.eps_prime_ = self.epsilon / 5.0
        self.delta_prime_ = self.delta / 3.0
        if self.t is not None:
            self.t_ = self.t
        else:
            self.t_ = math.ceil(12.0 / self.eps_prime_ ** 2
                                * (math.log2(1.0 / self.delta_prime_) + 2 * k + math.log2(n)))
        self.cap_ = math.ceil((1.0 + 3.0 * self.eps_prime_) * self.t_)
        base = 1.0 + self.eps_prime_
        self.grid_ = base ** np.arange(math.ceil(math.log(n) / math.log(base)) + 1)

        self.count_ = CountSketcher(self.eps_prime_, self.delta_prime_,
                                    seed=child_seed(self.seed, _COUNT_STREAM))
        self.count_.fit(instance, hypotheticals)
        self.labels_ = hypotheticals.labels

        weight_by_id = {t.id: t.weight for t in instance.tuples}
        sorted_members = [np.asarray(sorted(m), dtype=np.int64) for m in hypotheticals.member_sets]

        self.records_ = []      # per hypothetical: (weights, ids, charvecs) by (weight, id)
        self.prefix_len_ = []   # per hypothetical: records kept per grid index; -1 = sampled
        self.sampled_ = []      # per hypothetical: {grid index: (weights, ids, charvecs)}
        n_grid = len(self.grid_)
        for i, ids in enumerate(sorted_members):
            weights = np.asarray([weight_by_id[t] for t in ids], dtype=np.float64)
            charvec = np.zeros(len(ids), dtype=np.uint64)
            for l, other in enumerate(sorted_members):
                hit = np.isin(ids, other, assume_unique=True)
                charvec |= hit.astype(np.uint64) << np.uint64(l)
            order = np.lexsort((ids, weights))
            weights, ids, charvec = weights[order], ids[order], charvec[order]
            self.records_.append((weights, ids, charvec))

            n_i = len(ids)
            plen = np.full(n_grid, -1, dtype=np.int64)
            sampled: dict[int, tuple] = {}
            for j, r in enumerate(self.grid_):
                if r <= self.t_:
                    plen[j] = min(rank_index(r), n_i)
                else:
                    coins = coin_uniform(self.seed, _SAMPLE_STREAM, i * n_grid + j, ids)
                    chosen = coins < self.t_ / r
                    take = np.flatnonzero(chosen)[: self.cap_]
                    sampled[j] = (weights[take], ids[take], charvec[take])
            self.prefix_len_.append(plen)
            self.sampled_.append(sampled)
        return self

    # -- extraction -----------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "records_"):
            raise InputError("sketch is not fitted")

    def _grid_index(self, r_tilde: float) -> int:
        if r_tilde <= self.grid_[0]:
            return 0
        gamma = int(np.searchsorted(self.grid_, r_tilde, side="right")) - 1
        return min(gamma, len(self.grid_) - 1)

    def _extract_at_rank(self, scenario: Scenario, r_tilde: float) -> tuple[Tuple, bool]:
        on = scenario.sorted()
        gamma = self._grid_index(r_tilde)
        r_gamma = float(self.grid_[gamma])
        if r_gamma <= self.t_:
            parts = []
            for i in on:
                weights, ids, _ = self.records_[i - 1]
                length = int(self.prefix_len_[i - 1][gamma])
                parts.append((weights[:length], ids[:length]))
            w = np.concatenate([p[0] for p in parts])
            tid = np.concatenate([p[1] for p in parts])
            if len(tid) == 0:
                raise EmptyScenarioResult("scenario retains no tuples")
            _, keep = np.unique(tid, return_index=True)
            w, tid = w[keep], tid[keep]
            order = np.lexsort((tid, w))
            pos = min(rank_index(r_gamma), len(order)) - 1
            at = order[pos]
            return Tuple(int(tid[at]), float(w[at])), False

        below = {i: np.uint64(sum(1 << (l - 1) for l in on if l < i)) for i in on}
        collected_w, collected_id = [], []
        for i in on:
            entry = self.sampled_[i - 1].get(gamma)
            if entry is None:
                continue
            weights, ids, charvec = entry
            keep = (charvec & below[i]) == 0
            collected_w.append(weights[keep])
            collected_id.append(ids[keep])
        if not collected_w or sum(len(c) for c in collected_id) == 0:
            raise EmptyScenarioResult("no tuples collected for the scenario")
        w = np.concatenate(collected_w)
        tid = np.concatenate(collected_id)
        order = np.lexsort((tid, w))
        if len(order) < self.t_:
            at = order[-1]
            return Tuple(int(tid[at]), float(w[at])), True
        at = order[self.t_ - 1]
        return Tuple(int(tid[at]), float(w[at])), False

    def quantile(self, scenario: Scenario, phi: float) -> QuantileAnswer:
        """The tuple whose rank approximates ceil(phi * |scenario instance|)."""
        self._check_fitted()
        scenario.check(self.k_)
        if not 0 < phi <= 1:
            raise InputError("phi must be in (0, 1]")
        n_tilde = self.count_.estimate(scenario)
        if n_tilde == 0:
            raise EmptyScenarioResult("count estimate is zero")
        value, degraded = self._extract_at_rank(scenario, phi * n_tilde)
        return QuantileAnswer(value, degraded)

    def rank_of(self, scenario: Scenario, weight: float) -> RankAnswer:
        """Approximate rank of the given weight in the scenario's instance.

        Probes the quantile extraction at ranks (1+epsilon)^l and returns
        the grid rank of the probed tuple whose weight is closest to the
        query (ties towards the lower weight).
        """
        self._check_fitted()
        scenario.check(self.k_)
        n_tilde = self.count_.estimate(scenario)
        if n_tilde == 0:
            raise EmptyScenarioResult("count estimate is zero")
        base = 1.0 + self.epsilon
        targets = [min(base ** l, float(n_tilde))
                   for l in range(math.ceil(math.log(max(n_tilde, 2)) / math.log(base)) + 1)]
        best: tuple | None = None
        for r_tilde in targets:
            value, degraded = self._extract_at_rank(scenario, r_tilde)
            gap = abs(value.weight - weight)
            key = (gap, value.weight)
            if best is None or key < best[0]:
                best = (key, r_tilde, degraded)
        return RankAnswer(rank_index(best[1]), best[2])
