import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provkit.exceptions import EmptyScenario, InputError, UnknownHypothetical
from provkit.model import (
    HypotheticalSet,
    Instance,
    Scenario,
    Tuple,
    all_scenarios,
    apply_scenario,
    load_aggregate_csv,
    load_hypotheticals_json,
    load_regression_csv,
    validate,
)

from conftest import make_aggregate_instance, make_hypotheticals


def small_instance(n=10):
    return Instance([Tuple(i, float(i)) for i in range(1, n + 1)])


class TestApplyScenario:
    def test_union_of_two(self):
        instance = small_instance(4)
        hyps = HypotheticalSet([[1, 2, 3], [3, 4]])
        result = apply_scenario(instance, hyps, Scenario([1, 2]))
        assert result.ids() == {1, 2, 3, 4}

    def test_singleton_identity(self):
        instance = small_instance(1)
        hyps = HypotheticalSet([[1]])
        assert apply_scenario(instance, hyps, Scenario([1])).ids() == {1}

    def test_shared_tuple_appears_once(self):
        instance = small_instance(3)
        hyps = HypotheticalSet([[1, 2], [2, 3]])
        result = apply_scenario(instance, hyps, Scenario([1, 2]))
        assert result.n == 3

    def test_matches_membership_scan(self, rng):
        # independent oracle: keep a tuple iff some turned-on hypothetical
        # lists its id
        instance = make_aggregate_instance(rng, 100)
        hyps = make_hypotheticals(rng, instance.ids(), 5)
        for scenario in all_scenarios(5):
            expected = {
                t.id for t in instance.tuples
                if any(t.id in hyps.member(i) for i in scenario.on)
            }
            assert apply_scenario(instance, hyps, scenario).ids() == expected

    def test_empty_scenario_rejected(self):
        with pytest.raises(EmptyScenario):
            Scenario([])

    def test_unknown_hypothetical(self):
        instance = small_instance(3)
        hyps = HypotheticalSet([[1, 2]])
        with pytest.raises(UnknownHypothetical):
            apply_scenario(instance, hyps, Scenario([2]))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_union_and_monotone_properties(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    instance = make_aggregate_instance(rng, 40)
    k = data.draw(st.integers(2, 5))
    hyps = make_hypotheticals(rng, instance.ids(), k)
    s1 = Scenario(data.draw(st.sets(st.integers(1, k), min_size=1)))
    s2 = Scenario(data.draw(st.sets(st.integers(1, k), min_size=1)))
    joint = Scenario(s1.on | s2.on)
    ids1 = apply_scenario(instance, hyps, s1).ids()
    ids2 = apply_scenario(instance, hyps, s2).ids()
    assert apply_scenario(instance, hyps, joint).ids() == ids1 | ids2
    if s1.on <= s2.on:
        assert ids1 <= ids2


class TestValidate:
    def test_negative_weight_reported(self):
        instance = Instance([Tuple(1, -3.0), Tuple(2, 1.0)])
        hyps = HypotheticalSet([[1, 2]])
        report = validate(instance, hyps)
        bad = report.of_kind("NonPositiveWeight")
        assert len(bad) == 1 and bad[0].tuple_id == 1

    def test_disjoint_flag(self):
        instance = small_instance(4)
        assert validate(instance, HypotheticalSet([[1, 2], [3, 4]])).disjoint
        assert not validate(instance, HypotheticalSet([[1, 2], [2, 3]])).disjoint

    def test_dangling_reference(self):
        instance = small_instance(3)
        report = validate(instance, HypotheticalSet([[1, 999]]))
        dangling = report.of_kind("DanglingReference")
        assert len(dangling) == 1 and dangling[0].tuple_id == 999

    def test_duplicate_id(self):
        instance = Instance([Tuple(1, 1.0), Tuple(1, 2.0)])
        report = validate(instance, HypotheticalSet([[1]]))
        assert report.of_kind("DuplicateId")


class TestLoaders:
    def test_aggregate_csv(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("id,weight,a1\n1,2.5,R\n2,3.5,S\n")
        instance = load_aggregate_csv(path)
        assert instance.n == 2
        assert instance[1].weight == 2.5
        assert instance[2].attrs == ("S",)

    def test_regression_csv(self, tmp_path):
        path = tmp_path / "reg.csv"
        path.write_text("id,f1,f2,target\n1,0.5,1.0,2.0\n2,1.5,2.0,3.0\n")
        instance = load_regression_csv(path)
        assert instance.is_regression
        assert instance[2].features == (1.5, 2.0)
        assert instance[2].target == 3.0

    def test_hypotheticals_json(self, tmp_path):
        path = tmp_path / "hyps.json"
        path.write_text('{"k": 2, "members": [[1, 2], [2]], "labels": ["a", "b"]}')
        hyps = load_hypotheticals_json(path)
        assert hyps.k == 2
        assert hyps.member(2) == frozenset({2})
        assert hyps.labels == ["a", "b"]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("weight\n1\n")
        with pytest.raises(InputError):
            load_aggregate_csv(path)

    def test_mismatched_k_rejected(self, tmp_path):
        path = tmp_path / "hyps.json"
        path.write_text('{"k": 3, "members": [[1]]}')
        with pytest.raises(InputError):
            load_hypotheticals_json(path)


def test_scenario_parse():
    assert Scenario.parse("1,3, 5").sorted() == [1, 3, 5]
    with pytest.raises(InputError):
        Scenario.parse("1,x")


def test_empty_scenario_result_is_legal_empty_instance():
    # all turned-on hypotheticals empty: a legal empty instance downstream
    from provkit.count import CountSketcher
    from provkit.exceptions import EmptyScenarioResult
    from provkit.sums import SumSketcher

    instance = Instance([Tuple(1, 2.0), Tuple(2, 3.0)])
    hyps = HypotheticalSet([[], [1, 2]])
    assert apply_scenario(instance, hyps, Scenario([1])).n == 0
    counts = CountSketcher(0.5, 0.2, seed=0).fit(instance, hyps)
    assert counts.estimate(Scenario([1])) == 0
    sums = SumSketcher(0.5, 0.2, seed=0).fit(instance, hyps)
    assert sums.estimate_sum(Scenario([1])) == 0.0
    with pytest.raises(EmptyScenarioResult):
        sums.estimate_average(Scenario([1]))
