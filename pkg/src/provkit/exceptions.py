"""Exception hierarchy shared by all sketch families.

Two branches matter operationally: ``InputError`` (bad data, bad scenario,
bad query -- CLI exit code 2) and ``ExtractionError`` (a well-formed request
that the sketch cannot answer -- CLI exit code 3).
"""


class ProvisioningError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InputError(ProvisioningError):
    """Invalid instance, hypotheticals, scenario, query, or parameters."""

    exit_code = 2


class ExtractionError(ProvisioningError):
    """A valid request the sketch cannot answer."""

    exit_code = 3


class EmptyScenario(InputError):
    """A scenario must turn on at least one hypothetical."""


class UnknownHypothetical(InputError):
    """Scenario index outside 1..k."""


class NonPositiveWeight(InputError):
    """Sum/average/quantile provisioning requires strictly positive weights."""


class EmptyHypothetical(ExtractionError):
    """Every turned-on hypothetical is empty for a query that needs rows."""


class EmptyScenarioResult(ExtractionError):
    """The scenario yields an empty instance and the query needs a tuple."""


class DegenerateSample(ExtractionError):
    """A stored sampling rate of zero was selected; the sketch is corrupt."""


class NotDisjoint(InputError):
    """The exact regression scheme requires pairwise disjoint hypotheticals."""


class SchemaMismatch(InputError):
    """Query references a relation absent from the instance."""


class NonBooleanQuery(InputError):
    """Provenance sketches are defined for boolean (empty-head) queries."""


class NegationNotSupported(InputError):
    """Negated atoms are rejected: provisioning them needs sketches
    exponential in the number of hypotheticals."""


class RecursionNotSupported(InputError):
    """Recursive rules are rejected: provisioning them needs sketches
    exponential in the number of hypotheticals."""


class VersionMismatch(InputError):
    """Serialized container has an unsupported format version."""


class ChecksumMismatch(InputError):
    """Serialized container failed integrity verification."""


class MalformedSection(InputError):
    """Serialized container is missing or corrupts a required section."""
