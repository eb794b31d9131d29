"""Complex-query provisioning: positive relational queries (unions of
conjunctive queries), grouping, and a numerical component.

A UCQ of maximum body size b is lifted to the numerical layer by
materializing derived hypotheticals: for every non-empty subset S' of at
most b original hypotheticals, the derived hypothetical holds the query
answer on the union of S'.  A scenario S then maps to the set of its
subsets of size at most b, and the query answer on the scenario equals the
union of the derived hypotheticals that are turned on -- so any numerical
sketch family plugs in unchanged.

Boolean (empty-head) queries get a cheaper sketch: a monotone DNF over the
hypothetical variables derived from tuple-level provenance.

Relational convention: a tuple with non-empty ``attrs`` belongs to the
relation named by ``attrs[0]`` and its fields are ``attrs[1:]``; all
fields compare as strings.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from itertools import combinations, product

from sklearn.base import BaseEstimator

from .count import CountSketcher
from .exceptions import (
    EmptyScenario,
    ExtractionError,
    InputError,
    NegationNotSupported,
    NonBooleanQuery,
    RecursionNotSupported,
    SchemaMismatch,
)
from .hashing import child_seed
from .model import HypotheticalSet, Instance, RegRow, Scenario, Tuple, apply_scenario
from .quantile import QuantileSketcher
from .regression import RegressionSketcher
from .sums import SumSketcher

_GROUP_STREAM = 0x47525055


# ---------------------------------------------------------------------------
# Query syntax
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: str


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple


@dataclass(frozen=True)
class ConjunctiveQuery:
    head: tuple
    body: tuple

    @property
    def size(self) -> int:
        return len(self.body)


@dataclass(frozen=True)
class UcqQuery:
    disjuncts: tuple

    @property
    def b(self) -> int:
        return max(cq.size for cq in self.disjuncts)

    @property
    def head_arity(self) -> int:
        return len(self.disjuncts[0].head)

    @property
    def is_boolean(self) -> bool:
        return self.head_arity == 0


_ATOM_RE = re.compile(r"\s*(!|not\s+|\\\+\s*)?([A-Za-z_]\w*)\s*\(([^()]*)\)\s*")
_NUMBER_RE = re.compile(r"-?\d+(\.\d+)?")


def _parse_terms(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    terms = []
    for raw in text.split(","):
        token = raw.strip()
        if not token:
            raise InputError(f"empty term in {text!r}")
        if token[0] in "'\"" and token[-1] == token[0] and len(token) >= 2:
            terms.append(Const(token[1:-1]))
        elif _NUMBER_RE.fullmatch(token):
            terms.append(Const(token))
        elif re.fullmatch(r"[A-Za-z_]\w*", token):
            terms.append(Var(token))
        else:
            raise InputError(f"cannot parse term {token!r}")
    return tuple(terms)


def _parse_atom(text: str, allow_negation: bool = False) -> Atom:
    match = _ATOM_RE.fullmatch(text)
    if not match:
        raise InputError(f"cannot parse atom {text!r}")
    negated, relation, terms = match.groups()
    if negated:
        raise NegationNotSupported(
            "negated atoms are not provisionable: any scheme for them needs "
            "sketches exponential in the number of hypotheticals"
        )
    return Atom(relation, _parse_terms(terms))


def parse_ucq(text: str) -> UcqQuery:
    """Parse rules like ``ans(x,z) :- R(x,y), S(y,z)``.

    Disjuncts are separated by newlines or ``|``; all heads must share the
    same name and arity.  Negation and recursion are rejected.
    """
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rules.extend(part.strip() for part in line.split("|") if part.strip())
    if not rules:
        raise InputError("query text contains no rules")

    disjuncts = []
    head_name = None
    for rule in rules:
        if ":-" not in rule:
            raise InputError(f"rule {rule!r} has no ':-'")
        head_text, body_text = rule.split(":-", 1)
        head_atom = _parse_atom(head_text)
        if any(isinstance(t, Const) for t in head_atom.terms):
            raise InputError("head terms must be variables")
        if head_name is None:
            head_name = head_atom.relation
        elif head_atom.relation != head_name:
            raise InputError("all disjuncts must share one head predicate")
        body = tuple(_parse_atom(p) for p in _split_atoms(body_text))
        if not body:
            raise InputError(f"rule {rule!r} has an empty body")
        for atom in body:
            if atom.relation == head_name:
                raise RecursionNotSupported(
                    "recursive rules are not provisionable: any scheme for them "
                    "needs sketches exponential in the number of hypotheticals"
                )
        body_vars = {t.name for atom in body for t in atom.terms if isinstance(t, Var)}
        head_vars = {t.name for t in head_atom.terms}
        if not head_vars <= body_vars:
            raise InputError(f"unsafe rule {rule!r}: head variables missing from body")
        disjuncts.append(ConjunctiveQuery(head_atom.terms, body))

    arities = {len(cq.head) for cq in disjuncts}
    if len(arities) != 1:
        raise InputError("disjunct heads must have equal arity")
    return UcqQuery(tuple(disjuncts))


def ucq_to_text(query: UcqQuery) -> str:
    """Canonical text form of a UCQ (head predicate rendered as ``ans``)."""

    def term_text(term) -> str:
        return term.name if isinstance(term, Var) else f"'{term.value}'"

    def atom_text(atom: Atom) -> str:
        return f"{atom.relation}({','.join(term_text(t) for t in atom.terms)})"

    lines = []
    for cq in query.disjuncts:
        head = ",".join(term_text(t) for t in cq.head)
        body = ", ".join(atom_text(a) for a in cq.body)
        lines.append(f"ans({head}) :- {body}")
    return "\n".join(lines)


def _split_atoms(body_text: str) -> list[str]:
    parts, depth, current = [], 0, []
    for ch in body_text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if current:
        parts.append("".join(current))
    return [p for p in (p.strip() for p in parts) if p]


# ---------------------------------------------------------------------------
# Naive evaluation
# ---------------------------------------------------------------------------

def _relations(instance: Instance) -> dict:
    rels: dict[str, list] = {}
    for t in instance.tuples:
        if t.attrs:
            rels.setdefault(str(t.attrs[0]), []).append((tuple(str(v) for v in t.attrs[1:]), t.id))
    return rels


def check_schema(instance: Instance, query: UcqQuery) -> None:
    present = set(_relations(instance))
    for cq in query.disjuncts:
        for atom in cq.body:
            if atom.relation not in present:
                raise SchemaMismatch(f"relation {atom.relation!r} absent from the instance")


def eval_ucq(instance: Instance, query: UcqQuery, with_support: bool = False):
    """Set-semantics evaluation by nested-loop join.

    Returns the set of head-value tuples; with ``with_support`` returns a
    dict mapping each head tuple to the set of its supports (frozensets of
    base-tuple ids, one per derivation).
    """
    rels = _relations(instance)
    answers: dict[tuple, set] = {}

    def walk(body, idx, binding, support, head):
        if idx == len(body):
            values = tuple(binding[t.name] if isinstance(t, Var) else t.value for t in head)
            answers.setdefault(values, set()).add(frozenset(support))
            return
        atom = body[idx]
        for values, tid in rels.get(atom.relation, ()):
            if len(values) != len(atom.terms):
                continue
            new = dict(binding)
            ok = True
            for term, value in zip(atom.terms, values):
                if isinstance(term, Const):
                    if term.value != value:
                        ok = False
                        break
                elif term.name in new:
                    if new[term.name] != value:
                        ok = False
                        break
                else:
                    new[term.name] = value
            if ok:
                walk(body, idx + 1, new, support + [tid], head)

    for cq in query.disjuncts:
        walk(cq.body, 0, {}, [], cq.head)
    if with_support:
        return answers
    return set(answers)


# ---------------------------------------------------------------------------
# Lifting to derived hypotheticals
# ---------------------------------------------------------------------------

def canonical_subsets(k: int, b: int) -> list[tuple[int, ...]]:
    """Non-empty subsets of [k] of size <= b in canonical (sorted-tuple)
    order; the position of a subset is its derived-hypothetical index."""
    subsets = []
    for size in range(1, min(b, k) + 1):
        subsets.extend(combinations(range(1, k + 1), size))
    return sorted(subsets)


def derive_hypotheticals(instance: Instance, hypotheticals: HypotheticalSet,
                         query: UcqQuery, b: int | None = None):
    """Materialize the derived instance Q(I) and the derived hypotheticals
    Q(I|S') for every canonical subset S'.

    Returns (derived instance, derived hypothetical set, subsets); derived
    tuple ids are the 1-based positions of the sorted answer tuples, and
    each derived tuple keeps the answer values in ``attrs``.
    """
    check_schema(instance, query)
    b = query.b if b is None else b
    answers = sorted(eval_ucq(instance, query))
    position = {values: idx + 1 for idx, values in enumerate(answers)}
    derived_instance = Instance([Tuple(position[v], 1.0, v) for v in answers])
    subsets = canonical_subsets(hypotheticals.k, b)
    members = []
    for subset in subsets:
        sub = apply_scenario(instance, hypotheticals, Scenario(subset))
        members.append(sorted(position[v] for v in eval_ucq(sub, query)))
    labels = [",".join(str(i) for i in subset) for subset in subsets]
    return derived_instance, HypotheticalSet(members, labels=labels), subsets


def lift_scenario(scenario: Scenario, k: int, b: int) -> Scenario:
    """Map a scenario over the original hypotheticals to one over the
    derived hypotheticals: all non-empty subsets of it of size <= b."""
    scenario.check(k)
    subsets = canonical_subsets(k, b)
    index = {subset: pos + 1 for pos, subset in enumerate(subsets)}
    on = sorted(scenario.on)
    lifted = []
    for size in range(1, min(b, len(on)) + 1):
        lifted.extend(index[subset] for subset in combinations(on, size))
    if not lifted:
        raise EmptyScenario("lifted scenario is empty")
    return Scenario(lifted)


# ---------------------------------------------------------------------------
# Boolean provenance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProvenanceDnf:
    """Monotone DNF over hypothetical variables capturing a boolean UCQ."""

    k: int
    b: int
    terms: tuple

    def evaluate(self, scenario: Scenario) -> bool:
        scenario.check(self.k)
        return any(term <= scenario.on for term in self.terms)


def _absorb(terms: set) -> tuple:
    kept: list[frozenset] = []
    for term in sorted(terms, key=lambda t: (len(t), sorted(t))):
        if not any(other <= term for other in kept):
            kept.append(term)
    return tuple(kept)


def provenance_sketch(instance: Instance, hypotheticals: HypotheticalSet,
                      query: UcqQuery) -> ProvenanceDnf:
    """Compress a boolean UCQ into a monotone DNF over the k hypothetical
    variables: each derivation contributes the distributed product of its
    tuples' membership disjunctions."""
    if not query.is_boolean:
        raise NonBooleanQuery("provenance sketches require an empty head")
    check_schema(instance, query)
    supports = eval_ucq(instance, query, with_support=True).get((), set())
    terms: set[frozenset] = set()
    for support in supports:
        memberships = []
        alive = True
        for tid in support:
            owners = [i for i in range(1, hypotheticals.k + 1) if tid in hypotheticals.member(i)]
            if not owners:
                alive = False  # tuple in no hypothetical: derivation never survives
                break
            memberships.append(owners)
        if not alive:
            continue
        for choice in product(*memberships):
            terms.add(frozenset(choice))
    return ProvenanceDnf(hypotheticals.k, query.b, _absorb(terms))


# ---------------------------------------------------------------------------
# Grouped complex queries
# ---------------------------------------------------------------------------

_NUMERIC_KINDS = ("count", "sum", "average", "quantile", "regression")


@dataclass(frozen=True)
class ComplexQuery:
    """<logical UCQ; group-by attributes; numerical component>.

    ``group_by`` lists 0-based positions of the query head; the remaining
    head positions feed the numerical component (one weight column for
    sum/average/quantile; feature columns then a target column for
    regression).
    """

    logical: UcqQuery
    group_by: tuple
    numeric: dict

    def __post_init__(self):
        kind = self.numeric.get("kind")
        if kind not in _NUMERIC_KINDS:
            raise InputError(f"numeric kind must be one of {_NUMERIC_KINDS}, got {kind!r}")
        arity = self.logical.head_arity
        if any(not 0 <= g < arity for g in self.group_by):
            raise InputError("group_by positions must index the query head")
        if len(set(self.group_by)) != len(self.group_by):
            raise InputError("group_by positions must be distinct")


@dataclass
class GroupRow:
    key: tuple
    value: object = None
    degraded: bool = False
    error: str | None = None


def default_group_budget(k: int, n: int) -> int:
    return k * k * (math.ceil(math.log2(max(n, 2))) + 1)


class ComplexProvisioner(BaseEstimator):
    """Provision a grouped complex query over any scenario.

    One numerical sketch is built per group of the derived instance; a
    scenario is answered by lifting it to the derived hypotheticals and
    extracting every group's sketch.  Groups that are empty under the
    scenario are omitted, matching set semantics of the logical query.
    """

    def __init__(self, query: ComplexQuery, seed: int = 0, group_budget: int | None = None):
        self.query = query
        self.seed = seed
        self.group_budget = group_budget

    def fit(self, instance: Instance, hypotheticals: HypotheticalSet) -> "ComplexProvisioner":
        query = self.query
        self.k_ = hypotheticals.k
        self.n_ = instance.n
        self.b_ = query.logical.b
        self.query_text_ = ucq_to_text(query.logical)
        derived, derived_hyps, subsets = derive_hypotheticals(instance, hypotheticals, query.logical)
        self.subsets_ = subsets
        self.labels_ = hypotheticals.labels

        value_positions = [p for p in range(query.logical.head_arity) if p not in query.group_by]
        kind = query.numeric["kind"]
        epsilon = float(query.numeric.get("epsilon", 0.2))
        delta = float(query.numeric.get("delta", 0.1))
        if kind in ("sum", "average", "quantile") and len(value_positions) != 1:
            raise InputError(f"{kind} needs exactly one non-grouping head position")
        if kind == "regression" and len(value_positions) < 2:
            raise InputError("regression needs feature and target head positions")

        groups: dict[tuple, list[Tuple]] = {}
        for t in derived.tuples:
            key = tuple(t.attrs[p] for p in query.group_by)
            groups.setdefault(key, []).append(t)
        budget = self.group_budget if self.group_budget is not None else default_group_budget(self.k_, max(self.n_, 2))
        self.budget_exceeded_ = len(groups) > budget
        if self.budget_exceeded_:
            warnings.warn(f"{len(groups)} groups exceed the budget of {budget}", stacklevel=2)

        self.groups_ = {}
        for index, key in enumerate(sorted(groups)):
            tuples = groups[key]
            ids = {t.id for t in tuples}
            members = [[tid for tid in member if tid in ids] for member in derived_hyps.members]
            nonempty = frozenset(i + 1 for i, member in enumerate(members) if member)
            sliced = HypotheticalSet(members, labels=derived_hyps.labels)
            seed = child_seed(self.seed, _GROUP_STREAM, index)
            numeric_instance = self._numeric_instance(tuples, value_positions, kind)
            sketcher = self._sketcher(kind, epsilon, delta, seed)
            sketcher.fit(numeric_instance, sliced)
            self.groups_[key] = {"sketch": sketcher, "nonempty": nonempty}
        self.kind_ = kind
        self.epsilon_ = epsilon
        self.delta_ = delta
        return self

    @staticmethod
    def _numeric_instance(tuples: list, value_positions: list, kind: str) -> Instance:
        if kind == "count":
            return Instance([Tuple(t.id, 1.0) for t in tuples])
        try:
            if kind == "regression":
                rows = [RegRow(t.id,
                               tuple(float(t.attrs[p]) for p in value_positions[:-1]),
                               float(t.attrs[value_positions[-1]]))
                        for t in tuples]
                return Instance(rows)
            return Instance([Tuple(t.id, float(t.attrs[value_positions[0]])) for t in tuples])
        except ValueError as exc:
            raise InputError(f"non-numeric value in numerical head position: {exc}") from exc

    @staticmethod
    def _sketcher(kind: str, epsilon: float, delta: float, seed: int):
        if kind == "count":
            return CountSketcher(epsilon, delta, seed)
        if kind in ("sum", "average"):
            return SumSketcher(epsilon, delta, seed)
        if kind == "quantile":
            return QuantileSketcher(epsilon, delta, seed)
        return RegressionSketcher(epsilon, delta, seed)

    def _check_fitted(self) -> None:
        if not hasattr(self, "groups_"):
            raise InputError("sketch is not fitted")

    def answer(self, scenario: Scenario, phi: float | None = None) -> list[GroupRow]:
        """Per-group answers under the scenario; group errors are carried
        in-row and never abort the other groups."""
        self._check_fitted()
        scenario.check(self.k_)
        lifted = lift_scenario(scenario, self.k_, self.b_)
        rows = []
        for key in sorted(self.groups_):
            entry = self.groups_[key]
            if not (lifted.on & entry["nonempty"]):
                continue  # group vanishes under this scenario
            row = GroupRow(key=key)
            try:
                row.value, row.degraded = self._extract(entry["sketch"], lifted, phi)
            except ExtractionError as exc:
                row.error = str(exc)
            except InputError as exc:
                row.error = str(exc)
            rows.append(row)
        return rows

    def _extract(self, sketch, lifted: Scenario, phi: float | None):
        if self.kind_ == "count":
            return sketch.estimate(lifted), False
        if self.kind_ == "sum":
            return sketch.estimate_sum(lifted), False
        if self.kind_ == "average":
            return sketch.estimate_average(lifted), False
        if self.kind_ == "quantile":
            if phi is None:
                raise InputError("quantile extraction needs phi")
            answer = sketch.quantile(lifted, phi)
            return {"id": answer.value.id, "weight": answer.value.weight}, answer.degraded
        return list(map(float, sketch.coefficients(lifted))), False
