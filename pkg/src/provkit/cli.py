"""Command-line surface.

Subcommands: ``provision`` (compress an instance into a sketch container),
``answer`` (extract from a container), ``oracle`` (exact brute-force
answer from the raw inputs), ``measure`` (container size report), and
``serve`` (HTTP service).  Exit codes: 0 ok, 2 validation error, 3
extraction error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .container import answer_scenario, answer_to_json, load, measure, save
from .count import CountSketcher
from .exceptions import ExtractionError, InputError, ProvisioningError
from .model import (
    Scenario,
    load_aggregate_csv,
    load_hypotheticals_json,
    load_regression_csv,
)
from .oracle import OracleRequest, oracle_answer
from .quantile import QuantileSketcher
from .queries import ComplexProvisioner, ComplexQuery, parse_ucq
from .regression import RegressionSketcher
from .sums import SumSketcher

_QUERIES = ("count", "sum", "avg", "quantile", "regression", "complex")


def _read_complex_query(path: str, epsilon: float, delta: float) -> ComplexQuery:
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if not stripped.startswith("{"):
        raise InputError(
            "complex queries need a JSON descriptor: "
            '{"rules": "...", "group_by": [...], "numeric": {"kind": ...}}'
        )
    doc = json.loads(text)
    numeric = dict(doc.get("numeric") or {})
    numeric.setdefault("epsilon", epsilon)
    numeric.setdefault("delta", delta)
    return ComplexQuery(parse_ucq(doc["rules"]), tuple(doc.get("group_by", ())), numeric)


def _provision(args) -> int:
    hyps = load_hypotheticals_json(args.hypotheticals)
    if args.query == "regression":
        instance = load_regression_csv(args.input)
    else:
        instance = load_aggregate_csv(args.input)

    if args.query == "count":
        est = CountSketcher(args.epsilon, args.delta, args.seed).fit(instance, hyps)
        kind = "count"
    elif args.query in ("sum", "avg"):
        est = SumSketcher(args.epsilon, args.delta, args.seed).fit(instance, hyps)
        kind = "sum" if args.query == "sum" else "average"
    elif args.query == "quantile":
        est = QuantileSketcher(args.epsilon, args.delta, args.seed).fit(instance, hyps)
        kind = "quantile"
    elif args.query == "regression":
        est = RegressionSketcher(args.epsilon, args.delta, args.seed).fit(instance, hyps)
        kind = "regression"
    else:
        if not args.query_file:
            raise InputError("--query complex needs --query-file")
        query = _read_complex_query(args.query_file, args.epsilon, args.delta)
        est = ComplexProvisioner(query, seed=args.seed).fit(instance, hyps)
        kind = "complex"

    data = save(est, kind, labels=hyps.labels)
    with open(args.out, "wb") as fh:
        fh.write(data)
    print(f"wrote {args.out} ({len(data)} bytes, kind={kind})")
    return 0


def _answer(args) -> int:
    with open(args.sketch, "rb") as fh:
        estimator, kind, _ = load(fh.read())
    scenario = Scenario.parse(args.scenario)
    result = answer_scenario(estimator, kind, scenario, phi=args.phi, rank_of=args.rank_of)
    print(answer_to_json(result))
    return 0


def _oracle(args) -> int:
    hyps = load_hypotheticals_json(args.hypotheticals)
    scenario = Scenario.parse(args.scenario)
    kind = {"avg": "average"}.get(args.query, args.query)
    if kind == "regression":
        instance = load_regression_csv(args.input)
    else:
        instance = load_aggregate_csv(args.input)
    query = None
    if kind == "complex":
        if not args.query_file:
            raise InputError("--query complex needs --query-file")
        query = _read_complex_query(args.query_file, epsilon=0.0, delta=0.0)
    if kind == "quantile" and args.rank_of is not None:
        kind = "rank"
    request = OracleRequest(kind=kind, instance=instance, hypotheticals=hyps,
                            scenario=scenario, phi=args.phi, rank_of=args.rank_of,
                            query=query)
    value = oracle_answer(request)
    if kind == "quantile":
        value = {"id": value.id, "weight": value.weight}
    elif kind == "regression":
        coefficients, residual = value
        value = {"coefficients": [float(c) for c in coefficients], "residual": residual}
    elif kind == "complex":
        value = [{"group": list(key), "value": v.tolist() if hasattr(v, "tolist") else v}
                 for key, v in value]
    print(json.dumps({"kind": kind, "scenario": scenario.sorted(), "value": value},
                     sort_keys=True, separators=(",", ":")))
    return 0


def _measure(args) -> int:
    with open(args.sketch, "rb") as fh:
        report = measure(fh.read())
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0


def _serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.sketch_dir), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provkit",
                                     description="Sketch-based provisioning of what-if scenario queries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("provision", help="compress an instance into a sketch container")
    p.add_argument("--query", required=True, choices=_QUERIES)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", required=True)
    p.add_argument("--hypotheticals", required=True)
    p.add_argument("--query-file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_provision)

    p = sub.add_parser("answer", help="answer a scenario from a sketch container")
    p.add_argument("--sketch", required=True)
    p.add_argument("--scenario", required=True, help="comma-separated 1-based indices, e.g. 1,3,5")
    p.add_argument("--phi", type=float)
    p.add_argument("--rank-of", type=float)
    p.set_defaults(func=_answer)

    p = sub.add_parser("oracle", help="exact brute-force answer from the raw inputs")
    p.add_argument("--query", required=True, choices=_QUERIES)
    p.add_argument("--input", required=True)
    p.add_argument("--hypotheticals", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--phi", type=float)
    p.add_argument("--rank-of", type=float)
    p.add_argument("--query-file")
    p.set_defaults(func=_oracle)

    p = sub.add_parser("measure", help="section-wise size report of a container")
    p.add_argument("--sketch", required=True)
    p.set_defaults(func=_measure)

    p = sub.add_parser("serve", help="run the scenario-answering HTTP service")
    p.add_argument("--sketch-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ProvisioningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
