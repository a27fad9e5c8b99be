"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes: validation and
degenerate-topology problems exit 2, resource refusals exit 3 and
estimation failures exit 4.
"""


class SybilRegError(Exception):
    """Base class for all package errors."""


class ValidationError(SybilRegError, ValueError):
    """Input violates a documented invariant."""


class OverlappingNetworks(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class InvalidProbability(ValidationError):
    pass


class SingletonNetwork(ValidationError):
    pass


class InvalidDataset(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ProbabilitiesDoNotSumToOne(ValidationError):
    pass


class DegenerateTopology(SybilRegError):
    """Expected topology cannot be inverted as given."""


class GuaranteedNetwork(DegenerateTopology):
    """A network has probability exactly 1; roll it up first."""


class SingularTopology(DegenerateTopology):
    pass


class EstimationError(SybilRegError):
    pass


class RankDeficientDesign(EstimationError):
    pass


class InsufficientData(EstimationError):
    pass


class GraphError(SybilRegError):
    pass


class MultipleReferrers(GraphError):
    pass


class ReferralCycle(GraphError):
    pass


class ResourceRefusal(SybilRegError):
    """Request exceeds a documented size limit."""
