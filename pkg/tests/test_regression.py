import numpy as np
import pytest

from provkit.exceptions import DegenerateSample, EmptyHypothetical, NotDisjoint
from provkit.model import HypotheticalSet, Instance, RegRow, Scenario, all_scenarios
from provkit.regression import (
    DisjointRegressionSketcher,
    RegressionSketcher,
    leverage_scores,
)

from conftest import make_hypotheticals, make_regression_instance, union_ids


def min_norm_leverage(matrix, row):
    """Independent characterization: min ||x||^2 subject to M^T x = M_(row)."""
    solution, *_ = np.linalg.lstsq(matrix.T, matrix[row], rcond=None)
    return float(solution @ solution)


def stack(instance, hyps, scenario):
    ids = union_ids(hyps, scenario)
    rows = [r for r in instance.tuples if r.id in ids]
    a = np.asarray([r.features for r in rows])
    b = np.asarray([r.target for r in rows])
    return a, b


def optimal_residual(a, b):
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(np.linalg.norm(a @ solution - b))


class TestLeverageScores:
    def test_identity_matrix(self):
        rank, scores = leverage_scores(np.eye(4))
        assert rank == 4
        assert np.allclose(scores, 1.0)

    def test_duplicated_row_shares_score(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(4, 2))
        m = np.vstack([base, base[1]])
        _, scores = leverage_scores(m)
        assert scores[1] == pytest.approx(scores[4], abs=1e-12)

    def test_matches_min_norm_characterization(self, rng):
        m = rng.normal(size=(50, 3))
        rank, scores = leverage_scores(m)
        assert rank == 3
        for row in range(50):
            assert scores[row] == pytest.approx(min_norm_leverage(m, row), abs=1e-9)

    def test_scores_sum_to_rank(self, rng):
        for _ in range(10):
            rows = int(rng.integers(2, 30))
            cols = int(rng.integers(1, 6))
            m = rng.normal(size=(rows, cols))
            if rng.random() < 0.3 and cols > 1:
                m[:, -1] = m[:, 0]  # force rank deficiency
            rank, scores = leverage_scores(m)
            assert scores.sum() == pytest.approx(rank, abs=1e-9)

    def test_zero_matrix_rank_zero(self):
        rank, scores = leverage_scores(np.zeros((3, 2)))
        assert rank == 0
        assert np.allclose(scores, 0.0)

    def test_monotone_under_stacking(self, rng):
        for _ in range(100):
            n, m, d = (int(rng.integers(2, 12)) for _ in range(3))
            a = rng.normal(size=(n, max(d, 1)))
            b = rng.normal(size=(m, max(d, 1)))
            _, before = leverage_scores(a)
            _, after = leverage_scores(np.vstack([a, b]))
            assert np.all(after[:n] <= before + 1e-9)


class TestSampledRegression:
    def test_single_hypothetical_rate_vector(self, rng):
        instance = make_regression_instance(rng, 40, 2)
        hyps = HypotheticalSet([[r.id for r in instance.tuples]])
        sketch = RegressionSketcher(epsilon=0.5, seed=0).fit(instance, hyps)
        rates = sketch.samples_[0]["rates"]
        assert rates.shape[1] == 1
        assert np.all(rates[:, 0] > 0)

    def test_rates_quantized_and_positive_at_own_index(self, rng):
        instance = make_regression_instance(rng, 60, 3)
        hyps = make_hypotheticals(rng, instance.ids(), 3)
        sketch = RegressionSketcher(epsilon=0.5, seed=1).fit(instance, hyps)
        n = instance.n
        for i in range(3):
            sample = sketch.samples_[i]
            assert np.all(sample["rates"][:, i] > 0)
            steps = sample["rates"] * n
            assert np.allclose(steps, np.round(steps), atol=1e-9)

    def test_rates_match_recomputed_profiles(self, rng):
        instance = make_regression_instance(rng, 50, 2)
        hyps = make_hypotheticals(rng, instance.ids(), 2)
        sketch = RegressionSketcher(epsilon=0.5, seed=2).fit(instance, hyps)
        n = instance.n
        for i, members in enumerate(hyps.member_sets):
            ordered = sorted(members)
            a = np.asarray([instance[t].features for t in ordered])
            rank, scores = leverage_scores(a)
            expected = {
                t: max(np.ceil(s / rank * n) / n, 1.0 / n)
                for t, s in zip(ordered, scores)
            }
            sample = sketch.samples_[i]
            for row_id, rate in zip(sample["ids"], sample["rates"][:, i]):
                assert rate == pytest.approx(expected[int(row_id)], abs=1e-12)

    def test_consistent_system_zero_residual(self, rng):
        instance = make_regression_instance(rng, 80, 3, consistent=True)
        hyps = make_hypotheticals(rng, instance.ids(), 3)
        sketch = RegressionSketcher(epsilon=0.5, seed=3).fit(instance, hyps)
        for scenario in all_scenarios(3):
            a, b = stack(instance, hyps, scenario)
            x = sketch.coefficients(scenario)
            assert float(np.linalg.norm(a @ x - b)) <= 1e-8

    def test_all_ones_design_recovers_mean(self, rng):
        targets = rng.normal(size=30)
        instance = Instance([RegRow(i + 1, (1.0,), float(targets[i])) for i in range(30)])
        hyps = HypotheticalSet([[i + 1 for i in range(30)]])
        sketch = RegressionSketcher(epsilon=0.5, seed=4).fit(instance, hyps)
        x = sketch.coefficients(Scenario([1]))
        mean = targets.mean()
        opt = float(np.linalg.norm(targets - mean))
        got = float(np.linalg.norm(targets - x[0]))
        assert got <= 1.5 * opt
        assert abs(x[0] - mean) <= 0.2 * abs(mean) + 0.2 * targets.std()

    def test_accuracy_small_sweep(self):
        rng = np.random.default_rng(55)
        good = 0
        total = 0
        for trial in range(3):
            instance = make_regression_instance(rng, 300, 3)
            hyps = make_hypotheticals(rng, instance.ids(), 4)
            sketch = RegressionSketcher(epsilon=0.5, seed=trial).fit(instance, hyps)
            for scenario in all_scenarios(4):
                a, b = stack(instance, hyps, scenario)
                x = sketch.coefficients(scenario)
                total += 1
                good += float(np.linalg.norm(a @ x - b)) <= 1.5 * optimal_residual(a, b)
        assert good / total >= 0.9

    def test_empty_hypothetical_alone_is_illegal(self, rng):
        instance = make_regression_instance(rng, 20, 2)
        hyps = HypotheticalSet([[r.id for r in instance.tuples], []])
        sketch = RegressionSketcher(epsilon=0.5, seed=5).fit(instance, hyps)
        with pytest.raises(EmptyHypothetical):
            sketch.coefficients(Scenario([2]))
        # mixed scenarios fall back to the non-empty hypotheticals
        x = sketch.coefficients(Scenario([1, 2]))
        assert x.shape == (2,)

    def test_degenerate_rate_detected(self, rng):
        instance = make_regression_instance(rng, 20, 2)
        hyps = HypotheticalSet([[r.id for r in instance.tuples]])
        sketch = RegressionSketcher(epsilon=0.5, seed=6).fit(instance, hyps)
        sketch.samples_[0]["rates"][:] = 0.0
        with pytest.raises(DegenerateSample):
            sketch.coefficients(Scenario([1]))

    def test_extraction_rate_dominates_union_leverage(self, rng):
        # q_j >= L_{S,j} / (k * rank(I_S)) for every scenario and member row:
        # the stored per-hypothetical rates upper-bound the union's leverage
        # by monotonicity, so the average over the turned-on hypotheticals
        # keeps enough mass on every row
        from provkit.model import all_scenarios

        instance = make_regression_instance(rng, 40, 2)
        hyps = make_hypotheticals(rng, instance.ids(), 3)
        n = instance.n
        k = hyps.k
        rates = {}
        for i, members in enumerate(hyps.member_sets, start=1):
            ordered = sorted(members)
            a = np.asarray([instance[t].features for t in ordered])
            rank, scores = leverage_scores(a)
            for t, s in zip(ordered, scores):
                rates[(i, t)] = max(np.ceil(s / rank * n) / n, 1.0 / n)
        for scenario in all_scenarios(k):
            ids = sorted(union_ids(hyps, scenario))
            stacked = np.asarray([instance[t].features for t in ids])
            union_rank, union_scores = leverage_scores(stacked)
            for t, score in zip(ids, union_scores):
                q = sum(rates.get((i, t), 0.0) for i in scenario.on) / len(scenario.on)
                assert q >= score / (k * union_rank) - 1e-9

    def test_determinism(self, rng):
        instance = make_regression_instance(rng, 40, 2)
        hyps = make_hypotheticals(rng, instance.ids(), 2)
        a = RegressionSketcher(epsilon=0.5, seed=7).fit(instance, hyps)
        b = RegressionSketcher(epsilon=0.5, seed=7).fit(instance, hyps)
        assert np.array_equal(a.permutations_, b.permutations_)
        for i in range(2):
            assert np.array_equal(a.samples_[i]["ids"], b.samples_[i]["ids"])
        scenario = Scenario([1, 2])
        assert np.array_equal(a.coefficients(scenario), b.coefficients(scenario))


class TestDisjointRegression:
    def test_single_hypothetical_matches_direct_solve(self, rng):
        instance = make_regression_instance(rng, 30, 2)
        ids = [r.id for r in instance.tuples]
        hyps = HypotheticalSet([ids[:15], ids[15:]])
        sketch = DisjointRegressionSketcher().fit(instance, hyps)
        a, b = stack(instance, hyps, Scenario([1]))
        expected, *_ = np.linalg.lstsq(a, b, rcond=None)
        assert np.allclose(sketch.coefficients(Scenario([1])), expected, atol=1e-9)

    def test_two_halves_equal_full_solve(self, rng):
        instance = make_regression_instance(rng, 40, 3)
        ids = [r.id for r in instance.tuples]
        hyps = HypotheticalSet([ids[:20], ids[20:]])
        sketch = DisjointRegressionSketcher().fit(instance, hyps)
        a = np.asarray([r.features for r in instance.tuples])
        b = np.asarray([r.target for r in instance.tuples])
        expected, *_ = np.linalg.lstsq(a, b, rcond=None)
        assert np.allclose(sketch.coefficients(Scenario([1, 2])), expected, atol=1e-9)

    def test_every_scenario_matches_oracle(self, rng):
        instance = make_regression_instance(rng, 60, 3)
        ids = np.asarray([r.id for r in instance.tuples])
        parts = np.array_split(rng.permutation(ids), 4)
        hyps = HypotheticalSet([sorted(int(x) for x in part) for part in parts])
        sketch = DisjointRegressionSketcher().fit(instance, hyps)
        for scenario in all_scenarios(4):
            a, b = stack(instance, hyps, scenario)
            opt = optimal_residual(a, b)
            got = float(np.linalg.norm(a @ sketch.coefficients(scenario) - b))
            assert got <= opt * (1 + 1e-9) + 1e-12

    def test_overlap_rejected(self, rng):
        instance = make_regression_instance(rng, 10, 2)
        hyps = HypotheticalSet([[1, 2, 3], [3, 4]])
        with pytest.raises(NotDisjoint):
            DisjointRegressionSketcher().fit(instance, hyps)
