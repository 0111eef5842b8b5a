class ATHNError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(ATHNError, ValueError):
    pass


class InstanceParseError(ATHNError, ValueError):
    pass


class InfeasibleExpansionError(ATHNError):
    """A job start-time domain came out empty: the route cannot be scheduled."""


class VerificationError(ATHNError):
    """A schedule violates a constraint of the capacity model."""


class ConsistencyError(ATHNError):
    """A stored value disagrees with its recomputation."""


class OracleRefusedError(ATHNError):
    """The instance is too large for an exhaustive oracle."""


class StageError(ATHNError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
