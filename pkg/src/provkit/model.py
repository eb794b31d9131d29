"""Instances, hypotheticals, and scenarios.

A hypothetical retains a subset of an instance's tuples; a scenario turns a
non-empty subset of the k hypotheticals on, and the scenario's instance is
the union (by tuple id) of the retained subsets.  Everything here is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .exceptions import EmptyScenario, InputError, UnknownHypothetical


@dataclass(frozen=True)
class Tuple:
    """A keyed, weighted tuple; ``attrs`` carries relational constants."""

    id: int
    weight: float = 1.0
    attrs: tuple = ()


@dataclass(frozen=True)
class RegRow:
    """One regression row: d features and a target value."""

    id: int
    features: tuple
    target: float


class Instance:
    """An ordered collection of :class:`Tuple` or :class:`RegRow`.

    ``weight_bound`` caps the magnitude of weights and is used to size
    geometric weight grids; it defaults to the largest weight seen.
    """

    def __init__(self, tuples: Sequence, weight_bound: float | None = None):
        self.tuples = list(tuples)
        self.is_regression = bool(self.tuples) and isinstance(self.tuples[0], RegRow)
        if weight_bound is None:
            if self.is_regression or not self.tuples:
                weight_bound = 1.0
            else:
                weight_bound = max(abs(t.weight) for t in self.tuples)
        self.weight_bound = float(weight_bound)
        self._by_id = {t.id: t for t in self.tuples}

    @property
    def n(self) -> int:
        return len(self.tuples)

    def ids(self) -> set:
        return set(self._by_id)

    def __getitem__(self, tuple_id: int):
        return self._by_id[tuple_id]

    def __contains__(self, tuple_id: int) -> bool:
        return tuple_id in self._by_id

    def __iter__(self):
        return iter(self.tuples)

    def __len__(self) -> int:
        return len(self.tuples)


class HypotheticalSet:
    """k tuple-retaining subsets of an instance, given as explicit id lists."""

    def __init__(self, members: Sequence[Iterable[int]], labels: Sequence[str] | None = None):
        self.members = [list(m) for m in members]
        if not self.members:
            raise InputError("at least one hypothetical is required")
        self.member_sets = [frozenset(m) for m in self.members]
        if labels is not None and len(labels) != len(self.members):
            raise InputError("labels must match the number of hypotheticals")
        self.labels = list(labels) if labels is not None else [f"h{i + 1}" for i in range(len(self.members))]

    @property
    def k(self) -> int:
        return len(self.members)

    def member(self, index: int) -> frozenset:
        """1-based access, matching scenario indices."""
        return self.member_sets[index - 1]


class Scenario:
    """A non-empty set of 1-based hypothetical indices that are turned on."""

    def __init__(self, on: Iterable[int]):
        self.on = frozenset(int(i) for i in on)
        if not self.on:
            raise EmptyScenario("scenario must turn on at least one hypothetical")
        if any(i < 1 for i in self.on):
            raise UnknownHypothetical("hypothetical indices are 1-based")

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        try:
            return cls(int(p) for p in parts)
        except ValueError as exc:
            raise InputError(f"cannot parse scenario {text!r}") from exc

    def check(self, k: int) -> None:
        bad = [i for i in self.on if i > k]
        if bad:
            raise UnknownHypothetical(f"indices {sorted(bad)} exceed k={k}")

    def sorted(self) -> list[int]:
        return sorted(self.on)

    def __len__(self) -> int:
        return len(self.on)

    def __iter__(self):
        return iter(sorted(self.on))

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.on == other.on

    def __hash__(self):
        return hash(self.on)

    def __repr__(self):
        return f"Scenario({self.sorted()})"


def all_scenarios(k: int) -> Iterator[Scenario]:
    """All 2^k - 1 non-empty scenarios, in deterministic order."""
    for mask in range(1, 1 << k):
        yield Scenario(i + 1 for i in range(k) if mask >> i & 1)


def apply_scenario(instance: Instance, hypotheticals: HypotheticalSet, scenario: Scenario) -> Instance:
    """The sub-instance retained by the union of the turned-on hypotheticals.

    Tuple identity is by id: a tuple retained by several turned-on
    hypotheticals appears once, in instance order.
    """
    scenario.check(hypotheticals.k)
    keep = frozenset().union(*(hypotheticals.member(i) for i in scenario.on))
    return Instance([t for t in instance.tuples if t.id in keep], weight_bound=instance.weight_bound)


@dataclass(frozen=True)
class Finding:
    """One validation finding; ``kind`` is a stable machine-readable tag."""

    kind: str
    detail: str
    tuple_id: int | None = None
    hypothetical: int | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)
    disjoint: bool = True

    @property
    def ok(self) -> bool:
        return not self.findings

    def of_kind(self, kind: str) -> list[Finding]:
        return [f for f in self.findings if f.kind == kind]


def validate(instance: Instance, hypotheticals: HypotheticalSet) -> ValidationReport:
    """Diagnose an (instance, hypotheticals) pair without raising.

    Reports duplicate ids, dangling hypothetical references, non-positive
    weights (fatal for sum/average/quantile), and whether the hypotheticals
    are pairwise disjoint (which enables the exact regression scheme).
    """
    report = ValidationReport()
    seen: set[int] = set()
    for t in instance.tuples:
        if t.id in seen:
            report.findings.append(Finding("DuplicateId", f"tuple id {t.id} appears more than once", tuple_id=t.id))
        seen.add(t.id)
        if not instance.is_regression and not t.weight > 0:
            report.findings.append(
                Finding("NonPositiveWeight", f"tuple {t.id} has weight {t.weight}", tuple_id=t.id)
            )
    ids = instance.ids()
    for i, members in enumerate(hypotheticals.member_sets, start=1):
        for tid in sorted(members - ids):
            report.findings.append(
                Finding("DanglingReference", f"hypothetical {i} references unknown id {tid}",
                        tuple_id=tid, hypothetical=i)
            )
    sets = hypotheticals.member_sets
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            if sets[i] & sets[j]:
                report.disjoint = False
                break
        if not report.disjoint:
            break
    return report


def require_valid(instance: Instance, hypotheticals: HypotheticalSet, positive_weights: bool = False) -> ValidationReport:
    """Raise :class:`InputError` on findings that make sketching unsound."""
    from .exceptions import NonPositiveWeight

    report = validate(instance, hypotheticals)
    dup = report.of_kind("DuplicateId")
    if dup:
        raise InputError(dup[0].detail)
    dangling = report.of_kind("DanglingReference")
    if dangling:
        raise InputError(dangling[0].detail)
    if positive_weights:
        bad = report.of_kind("NonPositiveWeight")
        if bad:
            raise NonPositiveWeight(bad[0].detail)
    return report


# ---------------------------------------------------------------------------
# File formats: CSV instances, JSON hypotheticals.
# ---------------------------------------------------------------------------

def load_aggregate_csv(path) -> Instance:
    """CSV with header ``id,weight[,a1..]``; extra columns become attrs."""
    tuples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip().lower() != "id":
            raise InputError(f"{path}: expected header starting with 'id,weight'")
        for row in reader:
            if not row:
                continue
            try:
                tid = int(row[0])
                weight = float(row[1])
            except ValueError as exc:
                raise InputError(f"{path}: bad row {row!r}") from exc
            tuples.append(Tuple(tid, weight, tuple(v.strip() for v in row[2:])))
    return Instance(tuples)


def load_regression_csv(path) -> Instance:
    """CSV with header ``id,f1..fd,target``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0].strip().lower() != "id":
            raise InputError(f"{path}: expected header 'id,f1..fd,target'")
        width = len(header)
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise InputError(f"{path}: row width {len(row)} != header width {width}")
            try:
                rows.append(RegRow(int(row[0]), tuple(float(v) for v in row[1:-1]), float(row[-1])))
            except ValueError as exc:
                raise InputError(f"{path}: bad row {row!r}") from exc
    return Instance(rows)


def load_hypotheticals_json(path) -> HypotheticalSet:
    """JSON document ``{"k": k, "members": [[ids]...], "labels": [...]?}``."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "members" not in doc:
        raise InputError(f"{path}: expected an object with a 'members' list")
    members = doc["members"]
    k = doc.get("k", len(members))
    if k != len(members):
        raise InputError(f"{path}: k={k} but {len(members)} member lists")
    return HypotheticalSet(members, labels=doc.get("labels"))
