"""Distinct-count provisioning.

Compression hashes every retained tuple id with m pairwise-independent
functions and keeps, per hypothetical and hash, the t entries with the
highest trailing-zero counts together with short "concise" identifiers
that are shared across hypotheticals.  Extraction merges the turned-on
summaries, deduplicates by concise identifier, and estimates the distinct
count as t * 2^r with r the t-th highest trailing value (about t hashed
ids are divisible by 2^r, each marking ~2^r distinct ids); unions smaller
than t are counted exactly.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InputError
from .hashing import domain_bits, draw_family, trail
from .model import HypotheticalSet, Instance, Scenario, require_valid


def derived_t(epsilon: float) -> int:
    return math.ceil(256.0 / (epsilon * epsilon))


def derived_m(delta: float, k: int) -> int:
    return math.ceil(k + math.log2(1.0 / delta))


def estimate_from_lists(entries_per_hypothetical, t: int) -> int:
    """Single-hash count estimate from per-hypothetical summary lists.

    Each list holds (trailing-zeros, element-key) pairs, the element keys
    identifying tuples consistently across lists.  Reference semantics for
    the vectorized extraction path: deduplicate by key, then return the
    exact union size when fewer than t elements survive, else t * 2^r with
    r the t-th highest trailing value.
    """
    seen: dict = {}
    for entries in entries_per_hypothetical:
        for tr, key in entries:
            seen.setdefault(key, tr)
    trails = sorted(seen.values(), reverse=True)
    if len(trails) < t:
        return len(trails)
    return t * (1 << int(trails[t - 1]))


class CountSketcher(BaseEstimator):
    """(epsilon, delta) provisioning of the distinct-count query.

    Parameters follow the derivations t = ceil(256 / epsilon^2) and
    m = ceil(k + log2(1/delta)); pass explicit ``t``/``m`` to override
    (mainly for tests and embedded sketches).
    """

    def __init__(self, epsilon: float = 0.1, delta: float = 0.1, seed: int = 0,
                 t: int | None = None, m: int | None = None):
        self.epsilon = epsilon
        self.delta = delta
        self.seed = seed
        self.t = t
        self.m = m

    # -- compression --------------------------------------------------

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "CountSketcher":
        require_valid(instance, hypotheticals)
        ids = np.sort(np.asarray([t.id for t in instance.tuples], dtype=np.int64))
        dense_lists = []
        for members in hypotheticals.member_sets:
            member_ids = np.asarray(sorted(members), dtype=np.int64)
            dense_lists.append(np.searchsorted(ids, member_ids).astype(np.int64))
        self.labels_ = hypotheticals.labels
        self._fit_dense(instance.n, dense_lists)
        return self

    def _fit_dense(self, n: int, dense_lists: list[np.ndarray]) -> "CountSketcher":
        """Compress from per-hypothetical lists of dense ids in [0, n)."""
        if not 0 < self.epsilon <= 1:
            raise InputError("epsilon must be in (0, 1]")
        if not 0 < self.delta < 1:
            raise InputError("delta must be in (0,1)")
        k = len(dense_lists)
        self.k_ = k
        self.n_ = n
        self.bits_ = domain_bits(n)
        self.t_ = self.t if self.t is not None else derived_t(self.epsilon)
        self.m_ = self.m if self.m is not None else derived_m(self.delta, k)
        if self.t_ < 1 or self.m_ < 1:
            raise InputError("t and m must be at least 1")
        self.hashes_ = draw_family(self.seed, self.m_, self.bits_)
        dense_lists = [np.unique(np.asarray(d, dtype=np.int64)) for d in dense_lists]
        self.truncated_ = np.array([len(d) > self.t_ for d in dense_lists])

        self.lists_ = []         # [m][k] concise-id arrays, ascending
        self.trail_by_cid_ = []  # [m] trailing value per concise id
        for hash_fn in self.hashes_:
            kept_dense, kept_trail, kept_hash = [], [], []
            for dense in dense_lists:
                hv = hash_fn.apply(dense).astype(np.int64)
                tr = trail(hv, self.bits_)
                order = np.lexsort((dense, hv, -tr.astype(np.int64)))[: self.t_]
                kept_dense.append(dense[order])
                kept_trail.append(tr[order])
                kept_hash.append(hv[order])
            # Concise ids enumerate the union of recorded tuples in
            # (-trail, hashed value, dense id) order, so sorting by concise
            # id reproduces the total order used for the t highest trails.
            all_dense = np.concatenate(kept_dense) if kept_dense else np.array([], dtype=np.int64)
            uniq_dense, first = np.unique(all_dense, return_index=True)
            all_trail = np.concatenate(kept_trail).astype(np.int64) if kept_trail else np.array([], dtype=np.int64)
            all_hash = np.concatenate(kept_hash) if kept_hash else np.array([], dtype=np.int64)
            order = np.lexsort((uniq_dense, all_hash[first], -all_trail[first]))
            cid_at_pos = np.empty(len(uniq_dense), dtype=np.uint32)
            cid_at_pos[order] = np.arange(len(uniq_dense), dtype=np.uint32)
            self.trail_by_cid_.append(all_trail[first][order].astype(np.uint8))
            self.lists_.append([
                np.sort(cid_at_pos[np.searchsorted(uniq_dense, dense)])
                for dense in kept_dense
            ])
        return self

    # -- extraction ----------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "lists_"):
            raise InputError("sketch is not fitted")

    def per_hash_values(self, scenario: Scenario) -> list[int]:
        """The m per-hash count values whose median is the estimate; the
        per-hash value is exact below t, else t * 2^(t-th highest trail)."""
        self._check_fitted()
        scenario.check(self.k_)
        on = [i - 1 for i in scenario.sorted()]
        values = []
        for j in range(self.m_):
            union = np.unique(np.concatenate([self.lists_[j][i] for i in on]))
            if len(union) < self.t_:
                values.append(int(len(union)))
            else:
                r = int(self.trail_by_cid_[j][union[self.t_ - 1]])
                values.append(self.t_ * (1 << r))
        return values

    def estimate(self, scenario: Scenario) -> int:
        """Estimated distinct count of the scenario's instance."""
        self._check_fitted()
        scenario.check(self.k_)
        on = [i - 1 for i in scenario.sorted()]
        lengths = [len(self.lists_[0][i]) for i in on]
        if sum(lengths) < self.t_ and not any(self.truncated_[i] for i in on):
            # Every summary is exhaustive and the union stays below t, so
            # each hash reports the same exact union size.
            return int(len(np.unique(np.concatenate([self.lists_[0][i] for i in on]))))
        values = sorted(self.per_hash_values(scenario))
        return int(values[(len(values) - 1) // 2])
