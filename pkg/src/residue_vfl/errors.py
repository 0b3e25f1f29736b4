"""Exception hierarchy shared by every module."""


class VFLError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(VFLError, ValueError):
    """Operand shapes do not line up."""


class DomainError(VFLError, ValueError):
    """An argument lies outside the domain of the operation."""


class EncodingOverflowError(VFLError, OverflowError):
    """A real value is too large for the fixed-point plaintext ring."""


class ConfigError(VFLError):
    """Invalid or incompatible configuration."""


class ProtocolError(VFLError):
    """A party received something the protocol state machine does not allow."""


class IngestionError(VFLError):
    """A dataset file could not be parsed."""


class ParseError(VFLError):
    """A transcript or key file is malformed or has the wrong version."""
