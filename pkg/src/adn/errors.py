"""Exception types shared across the package."""


class AdnError(Exception):
    """Base class for all errors raised by this package."""


class IndexOutOfRange(AdnError):
    """A row or column index falls outside the matrix dimensions."""


class DuplicateEntry(AdnError):
    """The same (column, row) position was supplied more than once."""


class InvalidK(AdnError):
    """Requested number of parts is not in [1, n]."""


class CoordinateOutsidePart(AdnError):
    """A block-local operation received a coordinate owned by another part."""


class LengthMismatch(AdnError):
    """Vector length does not match the expected dimension."""


class InconsistentSharedVector(AdnError):
    """The incrementally maintained product vector drifted from A @ alpha."""


class InconsistentSnapshots(AdnError):
    """Local subproblems disagree on sigma or the shared-vector snapshot."""


class UnsupportedConjugate(AdnError):
    """No conjugate implemented for this regularizer kind."""


class InfiniteConjugate(AdnError):
    """A conjugate evaluated to +inf; use a bounded-support regularizer."""


class NonPositiveCurvature(AdnError):
    """A coordinate curvature came out negative; solver state is corrupted."""


class DegenerateSubproblem(AdnError):
    """The subproblem admits no measurable progress; accuracy ratio is 0."""


class DegenerateQuadraticTerm(AdnError):
    """The model's quadratic part is numerically zero; sigma left unchanged."""


class MissingConstant(AdnError):
    """A convergence constant is unavailable (e.g. unbounded support)."""


class InvalidInput(AdnError):
    """An argument violates the documented domain (e.g. non-positive)."""


class NonFiniteValue(AdnError):
    """A NaN or Inf appeared in a protocol message or an objective value."""


class ConfigError(AdnError):
    """A run configuration value is missing or out of range."""


class MalformedMessage(AdnError):
    """A serialized message failed validation on receipt."""


class ParseError(AdnError):
    """A data file line could not be parsed."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyDataset(AdnError):
    """The input file contains no examples."""


class InvalidSpec(AdnError):
    """A synthetic-problem specification is out of range."""
