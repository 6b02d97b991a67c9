"""Exception hierarchy shared by all leakscope modules."""


class LeakscopeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(LeakscopeError):
    """Malformed trace file content; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class AuxDeterminismError(LeakscopeError):
    """Duplicate (secret, public) rows disagree on auxiliary values."""

    def __init__(self, secret, public):
        super().__init__(
            f"aux values for secret={secret} public={public} are not deterministic"
        )
        self.secret = secret
        self.public = public


class DimensionError(LeakscopeError):
    """Unsupported public-input dimension (only scalar publics are handled)."""


class BasisError(LeakscopeError):
    """Invalid B-spline basis specification."""


class UnderDeterminedError(LeakscopeError):
    """Fewer distinct sample positions than basis functions."""


class DomainError(LeakscopeError):
    """Evaluation or comparison outside a curve's public-input domain."""


class InfeasibleClusteringError(LeakscopeError):
    """No cluster count within the bound separates all cannot-link pairs."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class UnsupportedNormError(LeakscopeError):
    """Distance norm not supported by the requested algorithm."""


class ThreatModelError(LeakscopeError):
    """Request outside the modeled attacker capabilities."""


class GenerationError(LeakscopeError):
    """Benchmark generator parameters outside their documented ranges."""


class PipelineStageError(LeakscopeError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
