"""Exact brute-force evaluation of every provisioned query.

The oracle applies the scenario to the instance and computes the answer
directly; it is the ground truth that every sketch is tested against.  It
shares the (weight, id) total order and the minimum-norm least-squares
convention with the sketches so comparisons are like-for-like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyScenarioResult, InputError
from .model import HypotheticalSet, Instance, Scenario, Tuple, apply_scenario
from .queries import ComplexQuery, eval_ucq


def exact_count(instance: Instance, hypotheticals: HypotheticalSet, scenario: Scenario) -> int:
    return apply_scenario(instance, hypotheticals, scenario).n


def exact_sum(instance: Instance, hypotheticals: HypotheticalSet, scenario: Scenario) -> float:
    sub = apply_scenario(instance, hypotheticals, scenario)
    return float(sum(t.weight for t in sub.tuples))


def exact_average(instance: Instance, hypotheticals: HypotheticalSet, scenario: Scenario) -> float:
    sub = apply_scenario(instance, hypotheticals, scenario)
    if sub.n == 0:
        raise EmptyScenarioResult("scenario retains no tuples")
    return float(sum(t.weight for t in sub.tuples)) / sub.n


def _sorted_tuples(sub: Instance) -> list:
    return sorted(sub.tuples, key=lambda t: (t.weight, t.id))


def exact_quantile(instance: Instance, hypotheticals: HypotheticalSet,
                   scenario: Scenario, phi: float) -> Tuple:
    """The tuple of rank ceil(phi * |I_S|) under the (weight, id) order."""
    if not 0 < phi <= 1:
        raise InputError("phi must be in (0, 1]")
    sub = apply_scenario(instance, hypotheticals, scenario)
    if sub.n == 0:
        raise EmptyScenarioResult("scenario retains no tuples")
    ordered = _sorted_tuples(sub)
    return ordered[math.ceil(phi * sub.n) - 1]


def exact_rank_of_tuple(instance: Instance, hypotheticals: HypotheticalSet,
                        scenario: Scenario, item: Tuple) -> int:
    """Rank of a tuple: how many tuples are <= it under (weight, id)."""
    sub = apply_scenario(instance, hypotheticals, scenario)
    key = (item.weight, item.id)
    return sum(1 for t in sub.tuples if (t.weight, t.id) <= key)


def exact_rank(instance: Instance, hypotheticals: HypotheticalSet,
               scenario: Scenario, weight: float) -> int:
    """Number of tuples with weight <= the probe weight."""
    sub = apply_scenario(instance, hypotheticals, scenario)
    return sum(1 for t in sub.tuples if t.weight <= weight)


def exact_regression(instance: Instance, hypotheticals: HypotheticalSet,
                     scenario: Scenario) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares optimum and its residual on the stacked
    scenario rows."""
    sub = apply_scenario(instance, hypotheticals, scenario)
    if not sub.is_regression or sub.n == 0:
        raise EmptyScenarioResult("scenario retains no regression rows")
    a = np.asarray([r.features for r in sub.tuples], dtype=np.float64)
    b = np.asarray([r.target for r in sub.tuples], dtype=np.float64)
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    return solution, float(np.linalg.norm(a @ solution - b))


def residual_on(instance: Instance, hypotheticals: HypotheticalSet,
                scenario: Scenario, coefficients: np.ndarray) -> float:
    """Residual of a candidate coefficient vector on the scenario rows."""
    sub = apply_scenario(instance, hypotheticals, scenario)
    a = np.asarray([r.features for r in sub.tuples], dtype=np.float64)
    b = np.asarray([r.target for r in sub.tuples], dtype=np.float64)
    return float(np.linalg.norm(a @ np.asarray(coefficients) - b))


def exact_complex(instance: Instance, hypotheticals: HypotheticalSet,
                  scenario: Scenario, query: ComplexQuery, phi: float | None = None) -> list:
    """Grouped exact answers: evaluate the logical query on the scenario's
    instance, group, and compute the numerical component exactly."""
    sub = apply_scenario(instance, hypotheticals, scenario)
    answers = sorted(eval_ucq(sub, query.logical))
    kind = query.numeric["kind"]
    value_positions = [p for p in range(query.logical.head_arity) if p not in query.group_by]
    groups: dict[tuple, list] = {}
    for values in answers:
        key = tuple(values[p] for p in query.group_by)
        groups.setdefault(key, []).append(values)
    rows = []
    for key in sorted(groups):
        members = groups[key]
        if kind == "count":
            rows.append((key, len(members)))
        elif kind in ("sum", "average"):
            total = sum(float(v[value_positions[0]]) for v in members)
            rows.append((key, total if kind == "sum" else total / len(members)))
        elif kind == "quantile":
            if phi is None:
                raise InputError("quantile oracle needs phi")
            ordered = sorted(float(v[value_positions[0]]) for v in members)
            rows.append((key, ordered[math.ceil(phi * len(ordered)) - 1]))
        else:
            a = np.asarray([[float(v[p]) for p in value_positions[:-1]] for v in members])
            b = np.asarray([float(v[value_positions[-1]]) for v in members])
            solution, *_ = np.linalg.lstsq(a, b, rcond=None)
            rows.append((key, solution))
    return rows


_KINDS = ("count", "sum", "average", "quantile", "rank", "regression", "complex")


@dataclass
class OracleRequest:
    kind: str
    instance: Instance
    hypotheticals: HypotheticalSet
    scenario: Scenario
    phi: float | None = None
    rank_of: float | None = None
    query: ComplexQuery | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "quantile" and self.phi is None:
            raise InputError("quantile oracle needs phi")
        if self.kind == "rank" and self.rank_of is None:
            raise InputError("rank oracle needs a probe weight")
        if self.kind == "complex" and self.query is None:
            raise InputError("complex oracle needs a query")


def oracle_answer(request: OracleRequest):
    """Dispatch an exact evaluation."""
    i, h, s = request.instance, request.hypotheticals, request.scenario
    if request.kind == "count":
        return exact_count(i, h, s)
    if request.kind == "sum":
        return exact_sum(i, h, s)
    if request.kind == "average":
        return exact_average(i, h, s)
    if request.kind == "quantile":
        return exact_quantile(i, h, s, request.phi)
    if request.kind == "rank":
        return exact_rank(i, h, s, request.rank_of)
    if request.kind == "regression":
        return exact_regression(i, h, s)
    return exact_complex(i, h, s, request.query, phi=request.phi)
