"""Least-squares provisioning.

Two schemes: a sampling sketch for arbitrary (overlapping) hypotheticals,
and an exact Gram-matrix sketch that applies when hypotheticals are
pairwise disjoint.

The sampling sketch draws, per hypothetical, t rows i.i.d. from the
hypothetical's leverage-score distribution and stores each row with its
sampling rate in every hypothetical (quantized to multiples of 1/n).
Extraction re-samples: for step l it takes the l-th sample of the first
turned-on hypothetical in the l-th stored random permutation of [k],
rescales the row by 1/sqrt(t q) where q is the average stored rate over
the turned-on hypotheticals, and solves least squares on the rescaled
rows.  Leverage-score monotonicity (adding rows never increases a row's
score) makes the stored per-hypothetical rates an upper-bound proxy for
the union's leverage, which is what the rescaling needs.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DegenerateSample, EmptyHypothetical, InputError, NotDisjoint
from .model import HypotheticalSet, Instance, Scenario, require_valid

_SAMPLE_STREAM = 0x524547
_PERM_STREAM = 0x52454750


def leverage_scores(matrix: np.ndarray) -> tuple[int, np.ndarray]:
    """Numerical rank and per-row leverage scores of a matrix.

    The leverage score of row i is the squared norm of row i of an
    orthonormal basis of the column space; scores sum to the rank.
    Singular values below max(n, d) * eps * sigma_max count as zero.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise InputError("leverage_scores expects a non-empty 2-d matrix")
    u, s, _ = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, np.zeros(matrix.shape[0])
    tol = max(matrix.shape) * np.finfo(np.float64).eps * s[0]
    rank = int(np.sum(s > tol))
    scores = np.sum(u[:, :rank] ** 2, axis=1)
    return rank, scores


def _stack(instance: Instance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not instance.is_regression:
        raise InputError("regression requires an instance of regression rows")
    ids = np.asarray([r.id for r in instance.tuples], dtype=np.int64)
    a = np.asarray([r.features for r in instance.tuples], dtype=np.float64)
    b = np.asarray([r.target for r in instance.tuples], dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise InputError("regression rows need at least one feature")
    return ids, a, b


class RegressionSketcher(BaseEstimator):
    """(epsilon, delta) provisioning of the l2-regression query.

    ``scale_constant`` is the leading constant of the sample count
    t = ceil(C/epsilon * k d log2(max(d,2)) * (k + log2(1/delta))).
    """

    def __init__(self, epsilon: float = 0.5, delta: float = 0.1, seed: int = 0,
                 scale_constant: float = 16.0, t: int | None = None):
        self.epsilon = epsilon
        self.delta = delta
        self.seed = seed
        self.scale_constant = scale_constant
        self.t = t

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "RegressionSketcher":
        require_valid(instance, hypotheticals)
        ids, a, b = _stack(instance)
        order = np.argsort(ids)
        ids, a, b = ids[order], a[order], b[order]
        n, d = a.shape
        k = hypotheticals.k
        self.k_ = k
        self.n_ = n
        self.d_ = d
        if self.t is not None:
            self.t_ = self.t
        else:
            self.t_ = math.ceil(self.scale_constant / self.epsilon * k * d
                                * math.log2(max(d, 2)) * (k + math.log2(1.0 / self.delta)))
        self.t_ = max(self.t_, d)

        # Quantized sampling rate of every row in every hypothetical:
        # ceil(p*n)/n, never rounded to zero for member rows.
        rate_matrix = np.zeros((k, n))
        dense_members = []
        exact_probs = []
        for i, members in enumerate(hypotheticals.member_sets):
            rows = np.searchsorted(ids, np.asarray(sorted(members), dtype=np.int64))
            dense_members.append(rows)
            if len(rows) == 0:
                exact_probs.append(None)
                continue
            rank, scores = leverage_scores(a[rows])
            if rank == 0:
                raise InputError(f"hypothetical {i + 1} has an all-zero design matrix")
            exact_probs.append(scores / scores.sum())
            rate_matrix[i, rows] = np.maximum(np.ceil(scores / rank * n) / n, 1.0 / n)

        self.empty_ = np.array([len(rows) == 0 for rows in dense_members])
        self.samples_ = []
        for i, rows in enumerate(dense_members):
            if len(rows) == 0:
                self.samples_.append(None)
                continue
            rng = np.random.default_rng([self.seed & (2**64 - 1), _SAMPLE_STREAM, i])
            picks = rows[rng.choice(len(rows), size=self.t_, replace=True, p=exact_probs[i])]
            self.samples_.append({
                "features": a[picks].copy(),
                "targets": b[picks].copy(),
                "ids": ids[picks].copy(),
                "rates": rate_matrix[:, picks].T.copy(),  # (t, k)
            })

        rng = np.random.default_rng([self.seed & (2**64 - 1), _PERM_STREAM])
        self.permutations_ = np.argsort(rng.random((self.t_, k)), axis=1).astype(np.int16) + 1
        self.labels_ = hypotheticals.labels
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "samples_"):
            raise InputError("sketch is not fitted")

    def coefficients(self, scenario: Scenario) -> np.ndarray:
        """Approximately optimal coefficient vector for the scenario."""
        self._check_fitted()
        scenario.check(self.k_)
        active = [i for i in scenario.sorted() if not self.empty_[i - 1]]
        if not active:
            raise EmptyHypothetical("every turned-on hypothetical is empty")
        on_mask = np.zeros(self.k_ + 1, dtype=bool)
        on_mask[active] = True
        hit = on_mask[self.permutations_]
        first = self.permutations_[np.arange(self.t_), hit.argmax(axis=1)]

        cols = np.asarray(active) - 1
        a_tilde = np.empty((self.t_, self.d_))
        b_tilde = np.empty(self.t_)
        for i in np.unique(first):
            sample = self.samples_[i - 1]
            steps = np.flatnonzero(first == i)
            q = sample["rates"][steps][:, cols].sum(axis=1) / len(active)
            if np.any(q <= 0):
                raise DegenerateSample("stored sampling rate of zero for a selected sample")
            scale = 1.0 / np.sqrt(self.t_ * q)
            a_tilde[steps] = sample["features"][steps] * scale[:, None]
            b_tilde[steps] = sample["targets"][steps] * scale
        solution, *_ = np.linalg.lstsq(a_tilde, b_tilde, rcond=None)
        return solution


class DisjointRegressionSketcher(BaseEstimator):
    """Exact regression provisioning for pairwise disjoint hypotheticals.

    Stores A_i^T A_i and A_i^T b_i per hypothetical; for a scenario the
    normal-equations pieces add up, and the minimum-norm optimum is
    recovered with a pseudo-inverse.
    """

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "DisjointRegressionSketcher":
        report = require_valid(instance, hypotheticals)
        if not report.disjoint:
            raise NotDisjoint("hypotheticals overlap; the exact scheme needs disjoint ones")
        ids, a, b = _stack(instance)
        order = np.argsort(ids)
        ids, a, b = ids[order], a[order], b[order]
        k = hypotheticals.k
        self.k_ = k
        self.n_ = len(ids)
        self.d_ = a.shape[1]
        self.gram_ = np.zeros((k, self.d_, self.d_))
        self.moment_ = np.zeros((k, self.d_))
        self.empty_ = np.ones(k, dtype=bool)
        for i, members in enumerate(hypotheticals.member_sets):
            rows = np.searchsorted(ids, np.asarray(sorted(members), dtype=np.int64))
            if len(rows) == 0:
                continue
            self.empty_[i] = False
            self.gram_[i] = a[rows].T @ a[rows]
            self.moment_[i] = a[rows].T @ b[rows]
        self.labels_ = hypotheticals.labels
        return self

    def coefficients(self, scenario: Scenario) -> np.ndarray:
        """Exact minimum-norm least-squares optimum for the scenario."""
        if not hasattr(self, "gram_"):
            raise InputError("sketch is not fitted")
        scenario.check(self.k_)
        active = [i for i in scenario.sorted() if not self.empty_[i - 1]]
        if not active:
            raise EmptyHypothetical("every turned-on hypothetical is empty")
        idx = np.asarray(active) - 1
        gram = self.gram_[idx].sum(axis=0)
        moment = self.moment_[idx].sum(axis=0)
        return np.linalg.pinv(gram) @ moment
