"""provkit: sketch-based provisioning of what-if scenario queries.

Compress a relational instance plus k overlapping hypotheticals once, then
answer count / sum / average / quantile / regression and grouped complex
queries for any of the 2^k scenarios from the sketch alone, with
multiplicative accuracy guarantees.
"""

from .container import ScenarioAnswer, SizeReport, answer_scenario, load, measure, save
from .count import CountSketcher
from .exceptions import (
    ChecksumMismatch,
    DegenerateSample,
    EmptyHypothetical,
    EmptyScenario,
    EmptyScenarioResult,
    ExtractionError,
    InputError,
    MalformedSection,
    NegationNotSupported,
    NonBooleanQuery,
    NonPositiveWeight,
    NotDisjoint,
    ProvisioningError,
    RecursionNotSupported,
    SchemaMismatch,
    UnknownHypothetical,
    VersionMismatch,
)
from .model import (
    HypotheticalSet,
    Instance,
    RegRow,
    Scenario,
    Tuple,
    all_scenarios,
    apply_scenario,
    validate,
)
from .oracle import OracleRequest, oracle_answer
from .quantile import QuantileSketcher
from .queries import (
    ComplexProvisioner,
    ComplexQuery,
    ProvenanceDnf,
    UcqQuery,
    derive_hypotheticals,
    eval_ucq,
    lift_scenario,
    parse_ucq,
    provenance_sketch,
)
from .regression import DisjointRegressionSketcher, RegressionSketcher, leverage_scores
from .sums import SumSketcher

__version__ = "0.1.0"

__all__ = [
    "CountSketcher", "SumSketcher", "QuantileSketcher",
    "RegressionSketcher", "DisjointRegressionSketcher", "ComplexProvisioner",
    "Instance", "HypotheticalSet", "Scenario", "Tuple", "RegRow",
    "apply_scenario", "validate", "all_scenarios",
    "UcqQuery", "ComplexQuery", "ProvenanceDnf",
    "parse_ucq", "eval_ucq", "derive_hypotheticals", "lift_scenario", "provenance_sketch",
    "leverage_scores",
    "OracleRequest", "oracle_answer",
    "save", "load", "measure", "answer_scenario", "ScenarioAnswer", "SizeReport",
    "ProvisioningError", "InputError", "ExtractionError",
    "EmptyScenario", "UnknownHypothetical", "NonPositiveWeight", "EmptyHypothetical",
    "EmptyScenarioResult", "DegenerateSample", "NotDisjoint", "SchemaMismatch",
    "NonBooleanQuery", "NegationNotSupported", "RecursionNotSupported",
    "VersionMismatch", "ChecksumMismatch", "MalformedSection",
]
