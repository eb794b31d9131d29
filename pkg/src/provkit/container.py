"""Versioned, self-describing serialization of fitted sketches.

Containers are canonical JSON (sorted keys, no whitespace) with bulk data
base64-encoded in fixed little-endian dtypes, so identical sketches always
produce identical bytes.  A container is readable without the original
instance; extraction runs entirely off the deserialized payload.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .count import CountSketcher
from .exceptions import (
    ChecksumMismatch,
    InputError,
    MalformedSection,
    VersionMismatch,
)
from .model import Scenario
from .quantile import QuantileSketcher
from .queries import ComplexProvisioner, ComplexQuery, parse_ucq
from .regression import DisjointRegressionSketcher, RegressionSketcher
from .sums import SumSketcher

FORMAT_VERSION = 1

KINDS = ("count", "sum", "average", "quantile", "regression", "regression_disjoint", "complex")


# ---------------------------------------------------------------------------
# Array packing
# ---------------------------------------------------------------------------

_DTYPES = {"f8": "<f8", "i8": "<i8", "i4": "<i4", "i2": "<i2", "u1": "|u1", "u4": "<u4", "u8": "<u8"}


def encode_array(arr: np.ndarray, dtype: str) -> dict:
    arr = np.asarray(arr)
    packed = np.ascontiguousarray(arr.astype(_DTYPES[dtype]))
    return {"dtype": dtype, "shape": list(arr.shape),
            "data": base64.b64encode(packed.tobytes()).decode("ascii")}


def decode_array(section: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(section["data"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype=_DTYPES[section["dtype"]])
        return arr.reshape(section["shape"]).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSection(f"bad array section: {exc}") from exc


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _checksum(body: dict) -> str:
    return "sha256:" + hashlib.sha256(_canonical(body)).hexdigest()


# ---------------------------------------------------------------------------
# Per-kind payloads
# ---------------------------------------------------------------------------

def _count_payload(est: CountSketcher) -> dict:
    return {
        "t": est.t_, "m": est.m_, "k": est.k_, "n": est.n_, "bits": est.bits_,
        "epsilon": est.epsilon, "delta": est.delta, "seed": est.seed,
        "truncated": encode_array(est.truncated_.astype(np.uint8), "u1"),
        "trail_by_cid": [encode_array(arr, "u1") for arr in est.trail_by_cid_],
        "lists": [[encode_array(arr, "u4") for arr in per_hash] for per_hash in est.lists_],
    }


def _count_restore(payload: dict) -> CountSketcher:
    est = CountSketcher(payload["epsilon"], payload["delta"], payload["seed"])
    est.t_, est.m_, est.k_, est.n_, est.bits_ = (payload[key] for key in ("t", "m", "k", "n", "bits"))
    est.truncated_ = decode_array(payload["truncated"]).astype(bool)
    est.trail_by_cid_ = [decode_array(sec).astype(np.uint8) for sec in payload["trail_by_cid"]]
    est.lists_ = [[decode_array(sec).astype(np.uint32) for sec in per_hash] for per_hash in payload["lists"]]
    if len(est.lists_) != est.m_ or any(len(per_hash) != est.k_ for per_hash in est.lists_):
        raise MalformedSection("count lists do not match m x k")
    return est


def _sum_payload(est: SumSketcher) -> dict:
    return {
        "epsilon": est.epsilon, "delta": est.delta, "seed": est.seed,
        "k": est.k_, "n": est.n_, "eps_prime": est.eps_prime_, "t": est.t_,
        "delta_prime": est.delta_prime_, "grid_bound": est.grid_bound_,
        "gammas": list(est.gammas_),
        "intervals": {str(l): _count_payload(sub) for l, sub in est.intervals_.items()},
        "full_count": _count_payload(est.full_count_),
    }


def _sum_restore(payload: dict) -> SumSketcher:
    est = SumSketcher(payload["epsilon"], payload["delta"], payload["seed"])
    est.k_, est.n_ = payload["k"], payload["n"]
    est.eps_prime_, est.t_ = payload["eps_prime"], payload["t"]
    est.delta_prime_, est.grid_bound_ = payload["delta_prime"], payload["grid_bound"]
    est.gammas_ = [g if g is None else int(g) for g in payload["gammas"]]
    est.intervals_ = {int(l): _count_restore(sub) for l, sub in payload["intervals"].items()}
    est.full_count_ = _count_restore(payload["full_count"])
    return est


def _quantile_payload(est: QuantileSketcher) -> dict:
    hyps = []
    for i in range(est.k_):
        weights, ids, charvec = est.records_[i]
        hyps.append({
            "weights": encode_array(weights, "f8"),
            "ids": encode_array(ids, "i8"),
            "charvec": encode_array(charvec, "u8"),
            "prefix_len": encode_array(est.prefix_len_[i], "i8"),
            "sampled": {
                str(j): {"weights": encode_array(w, "f8"), "ids": encode_array(t, "i8"),
                         "charvec": encode_array(c, "u8")}
                for j, (w, t, c) in sorted(est.sampled_[i].items())
            },
        })
    return {
        "epsilon": est.epsilon, "delta": est.delta, "seed": est.seed,
        "k": est.k_, "n": est.n_, "t": est.t_, "cap": est.cap_,
        "eps_prime": est.eps_prime_, "delta_prime": est.delta_prime_,
        "grid_len": len(est.grid_),
        "count": _count_payload(est.count_),
        "hypotheticals": hyps,
    }


def _quantile_restore(payload: dict) -> QuantileSketcher:
    est = QuantileSketcher(payload["epsilon"], payload["delta"], payload["seed"])
    est.k_, est.n_, est.t_, est.cap_ = (payload[key] for key in ("k", "n", "t", "cap"))
    est.eps_prime_, est.delta_prime_ = payload["eps_prime"], payload["delta_prime"]
    base = 1.0 + est.eps_prime_
    est.grid_ = base ** np.arange(payload["grid_len"])
    est.count_ = _count_restore(payload["count"])
    est.records_, est.prefix_len_, est.sampled_ = [], [], []
    for section in payload["hypotheticals"]:
        est.records_.append((decode_array(section["weights"]),
                             decode_array(section["ids"]),
                             decode_array(section["charvec"]).astype(np.uint64)))
        est.prefix_len_.append(decode_array(section["prefix_len"]))
        est.sampled_.append({
            int(j): (decode_array(sub["weights"]), decode_array(sub["ids"]),
                     decode_array(sub["charvec"]).astype(np.uint64))
            for j, sub in section["sampled"].items()
        })
    return est


def _regression_payload(est: RegressionSketcher) -> dict:
    samples = []
    for sample in est.samples_:
        if sample is None:
            samples.append(None)
        else:
            samples.append({
                "features": encode_array(sample["features"], "f8"),
                "targets": encode_array(sample["targets"], "f8"),
                "ids": encode_array(sample["ids"], "i8"),
                "rates": encode_array(sample["rates"], "f8"),
            })
    return {
        "epsilon": est.epsilon, "delta": est.delta, "seed": est.seed,
        "scale_constant": est.scale_constant,
        "k": est.k_, "n": est.n_, "d": est.d_, "t": est.t_,
        "empty": encode_array(est.empty_.astype(np.uint8), "u1"),
        "permutations": encode_array(est.permutations_, "i2"),
        "samples": samples,
    }


def _regression_restore(payload: dict) -> RegressionSketcher:
    est = RegressionSketcher(payload["epsilon"], payload["delta"], payload["seed"],
                             scale_constant=payload["scale_constant"])
    est.k_, est.n_, est.d_, est.t_ = (payload[key] for key in ("k", "n", "d", "t"))
    est.empty_ = decode_array(payload["empty"]).astype(bool)
    est.permutations_ = decode_array(payload["permutations"]).astype(np.int16)
    est.samples_ = []
    for sample in payload["samples"]:
        if sample is None:
            est.samples_.append(None)
        else:
            est.samples_.append({
                "features": decode_array(sample["features"]),
                "targets": decode_array(sample["targets"]),
                "ids": decode_array(sample["ids"]),
                "rates": decode_array(sample["rates"]),
            })
    return est


def _disjoint_payload(est: DisjointRegressionSketcher) -> dict:
    return {
        "k": est.k_, "n": est.n_, "d": est.d_,
        "empty": encode_array(est.empty_.astype(np.uint8), "u1"),
        "gram": encode_array(est.gram_, "f8"),
        "moment": encode_array(est.moment_, "f8"),
    }


def _disjoint_restore(payload: dict) -> DisjointRegressionSketcher:
    est = DisjointRegressionSketcher()
    est.k_, est.n_, est.d_ = payload["k"], payload["n"], payload["d"]
    est.empty_ = decode_array(payload["empty"]).astype(bool)
    est.gram_ = decode_array(payload["gram"])
    est.moment_ = decode_array(payload["moment"])
    return est


_NUMERIC_CODECS = {
    "count": (_count_payload, _count_restore),
    "sum": (_sum_payload, _sum_restore),
    "average": (_sum_payload, _sum_restore),
    "quantile": (_quantile_payload, _quantile_restore),
    "regression": (_regression_payload, _regression_restore),
}


def _complex_payload(est: ComplexProvisioner) -> dict:
    encode, _ = _NUMERIC_CODECS[est.kind_]
    groups = []
    for key in sorted(est.groups_):
        entry = est.groups_[key]
        groups.append({
            "key": list(key),
            "nonempty": sorted(entry["nonempty"]),
            "sketch": encode(entry["sketch"]),
        })
    return {
        "seed": est.seed,
        "query_text": est.query_text_,
        "group_by": list(est.query.group_by),
        "numeric": est.query.numeric,
        "k": est.k_, "n": est.n_, "b": est.b_,
        "kind": est.kind_, "epsilon": est.epsilon_, "delta": est.delta_,
        "budget_exceeded": bool(est.budget_exceeded_),
        "groups": groups,
    }


def _complex_restore(payload: dict) -> ComplexProvisioner:
    query = ComplexQuery(parse_ucq(payload["query_text"]),
                         tuple(payload["group_by"]), dict(payload["numeric"]))
    est = ComplexProvisioner(query, seed=payload["seed"])
    est.query_text_ = payload["query_text"]
    est.k_, est.n_, est.b_ = payload["k"], payload["n"], payload["b"]
    est.kind_, est.epsilon_, est.delta_ = payload["kind"], payload["epsilon"], payload["delta"]
    est.budget_exceeded_ = payload["budget_exceeded"]
    est.labels_ = [f"h{i + 1}" for i in range(est.k_)]
    _, restore = _NUMERIC_CODECS[est.kind_]
    est.groups_ = {}
    for section in payload["groups"]:
        est.groups_[tuple(section["key"])] = {
            "sketch": restore(section["sketch"]),
            "nonempty": frozenset(section["nonempty"]),
        }
    from .queries import canonical_subsets

    est.subsets_ = canonical_subsets(est.k_, est.b_)
    return est


_CODECS = dict(_NUMERIC_CODECS)
_CODECS["regression_disjoint"] = (_disjoint_payload, _disjoint_restore)
_CODECS["complex"] = (_complex_payload, _complex_restore)


# ---------------------------------------------------------------------------
# Container API
# ---------------------------------------------------------------------------

def save(estimator, kind: str, labels: list[str] | None = None) -> bytes:
    """Serialize a fitted sketch into canonical container bytes."""
    if kind not in KINDS:
        raise InputError(f"unknown sketch kind {kind!r}")
    encode, _ = _CODECS[kind]
    payload = encode(estimator)
    if labels is None:
        labels = getattr(estimator, "labels_", None) or [f"h{i + 1}" for i in range(estimator.k_)]
    body = {
        "format_version": FORMAT_VERSION,
        "query_kind": kind,
        "parameters": {
            "epsilon": getattr(estimator, "epsilon", getattr(estimator, "epsilon_", None)),
            "delta": getattr(estimator, "delta", getattr(estimator, "delta_", None)),
            "seed": getattr(estimator, "seed", None),
            "k": estimator.k_,
            "n": estimator.n_,
            "labels": labels,
        },
        "payload": payload,
    }
    body["checksum"] = _checksum({key: body[key] for key in ("format_version", "query_kind", "parameters", "payload")})
    return _canonical(body)


def load(data):
    """Rebuild a fitted sketch from container bytes (or a parsed dict).

    Returns (estimator, kind, parameters).
    """
    if isinstance(data, (bytes, str)):
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise MalformedSection(f"container is not valid JSON: {exc}") from exc
    else:
        doc = data
    if not isinstance(doc, dict):
        raise MalformedSection("container must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {version!r}")
    for section in ("query_kind", "parameters", "payload", "checksum"):
        if section not in doc:
            raise MalformedSection(f"missing section {section!r}")
    expected = _checksum({key: doc[key] for key in ("format_version", "query_kind", "parameters", "payload")})
    if doc["checksum"] != expected:
        raise ChecksumMismatch("container checksum does not match its contents")
    kind = doc["query_kind"]
    if kind not in KINDS:
        raise MalformedSection(f"unknown sketch kind {kind!r}")
    _, restore = _CODECS[kind]
    try:
        estimator = restore(doc["payload"])
    except (KeyError, TypeError) as exc:
        raise MalformedSection(f"payload is missing {exc}") from exc
    estimator.labels_ = doc["parameters"].get("labels") or [f"h{i + 1}" for i in range(estimator.k_)]
    return estimator, kind, doc["parameters"]


# ---------------------------------------------------------------------------
# Size accounting
# ---------------------------------------------------------------------------

@dataclass
class SizeReport:
    total_bits: int
    header_bits: int
    payload_bits: int
    sections: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"total_bits": self.total_bits, "header_bits": self.header_bits,
                "payload_bits": self.payload_bits, "sections": dict(sorted(self.sections.items()))}


def _section_bits(node) -> int:
    """Bits of one payload subtree: binary sections count their decoded
    payload, structural JSON counts its canonical text."""
    if isinstance(node, dict):
        if set(node) == {"dtype", "shape", "data"}:
            return 8 * len(base64.b64decode(node["data"]))
        return sum(_section_bits(v) for v in node.values()) + 8 * len(_canonical(sorted(node)))
    if isinstance(node, list):
        return sum(_section_bits(v) for v in node)
    return 8 * len(_canonical(node))


def measure(data) -> SizeReport:
    """Section-wise bit accounting of a container."""
    doc = json.loads(data) if isinstance(data, (bytes, str)) else data
    if "payload" not in doc:
        raise MalformedSection("missing section 'payload'")
    sections = {name: _section_bits(value) for name, value in doc["payload"].items()}
    payload_bits = sum(sections.values())
    header = {key: doc.get(key) for key in ("format_version", "query_kind", "parameters", "checksum")}
    header_bits = 8 * len(_canonical(header))
    return SizeReport(total_bits=header_bits + payload_bits, header_bits=header_bits,
                      payload_bits=payload_bits, sections=sections)


# ---------------------------------------------------------------------------
# Answers shared by CLI and service
# ---------------------------------------------------------------------------

@dataclass
class ScenarioAnswer:
    """Typed extraction result with its query metadata."""

    kind: str
    scenario: list
    value: object
    degraded: bool = False
    epsilon: float | None = None
    delta: float | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scenario": self.scenario, "value": self.value,
                "degraded": self.degraded, "epsilon": self.epsilon, "delta": self.delta}


def answer_scenario(estimator, kind: str, scenario: Scenario,
                    phi: float | None = None, rank_of: float | None = None) -> ScenarioAnswer:
    """Run one extraction and wrap it as a :class:`ScenarioAnswer`."""
    epsilon = getattr(estimator, "epsilon", getattr(estimator, "epsilon_", None))
    delta = getattr(estimator, "delta", getattr(estimator, "delta_", None))
    degraded = False
    if kind == "count":
        value = estimator.estimate(scenario)
    elif kind == "sum":
        value = estimator.estimate_sum(scenario)
    elif kind == "average":
        value = estimator.estimate_average(scenario)
    elif kind == "quantile":
        if rank_of is not None:
            answer = estimator.rank_of(scenario, rank_of)
            value, degraded = {"rank": answer.rank}, answer.degraded
        else:
            if phi is None:
                raise InputError("quantile extraction needs --phi (or --rank-of)")
            answer = estimator.quantile(scenario, phi)
            value = {"id": answer.value.id, "weight": answer.value.weight}
            degraded = answer.degraded
    elif kind in ("regression", "regression_disjoint"):
        value = [float(c) for c in estimator.coefficients(scenario)]
    elif kind == "complex":
        rows = estimator.answer(scenario, phi=phi)
        value = [
            {"group": list(r.key), "value": r.value, "degraded": r.degraded, "error": r.error}
            for r in rows
        ]
        degraded = any(r.degraded for r in rows)
    else:
        raise InputError(f"unknown sketch kind {kind!r}")
    if kind in ("sum", "average"):
        value = float(value)
    return ScenarioAnswer(kind=kind, scenario=scenario.sorted(), value=value,
                          degraded=degraded, epsilon=epsilon, delta=delta)


def answer_to_json(answer: ScenarioAnswer) -> str:
    return _canonical(answer.to_dict()).decode("utf-8")
