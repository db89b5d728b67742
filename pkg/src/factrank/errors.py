"""Exception types shared across the package.

Every failure mode surfaced to callers is a subclass of FactrankError so
batch drivers and the CLI can distinguish "our" errors from genuine bugs.
"""


class FactrankError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(FactrankError, ValueError):
    """A caller violated an operation's precondition."""


class DatasetParseError(FactrankError):
    """A dataset file line is not valid JSON."""

    def __init__(self, path, line_no, detail):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {detail}")


class DatasetSchemaError(FactrankError):
    """A dataset record is valid JSON but violates the file schema."""

    def __init__(self, path, line_no, detail):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {detail}")


class TransportError(FactrankError):
    """A remote call failed after exhausting retries."""


class ProtocolError(FactrankError):
    """A provider response violates the wire contract (shape, dimension)."""


class JudgeProtocolError(ProtocolError):
    """A judge response could not be parsed into the closed answer set."""

    def __init__(self, detail, raw_response=""):
        self.raw_response = raw_response
        super().__init__(detail)


class GenerationProtocolError(ProtocolError):
    """A synthetic-generation response is missing required parts."""


class DegenerateInputError(FactrankError):
    """A numeric input is degenerate (e.g. zero vector given to cosine)."""


class NumericalError(FactrankError):
    """An optimization step produced a non-finite value."""


class CheckpointError(FactrankError):
    """An adapter checkpoint file is unreadable, truncated, or mismatched."""
