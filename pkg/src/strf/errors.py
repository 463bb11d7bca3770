"""Exception taxonomy shared across the library.

Every failure a caller can reasonably branch on gets its own class; the CLI
maps these onto process exit codes (config 2, data 3, numeric 4).
"""


class StrfError(Exception):
    """Base class for all library errors."""


class ShapeError(StrfError):
    """Operand dimensions are incompatible. Messages name both shapes."""


class ConfigError(StrfError):
    """A configuration value is invalid or unknown."""


class ContractError(StrfError):
    """A call violated an API precondition (bad labels, non-scalar loss, ...)."""


class DomainError(StrfError):
    """An input is outside the mathematical domain (e.g. zero vector norm)."""


class DataError(StrfError):
    """Dataset files or serialized tensors are missing or malformed."""


class EvaluationError(StrfError):
    """A retrieval evaluation could not produce any result."""


class NumericError(StrfError):
    """A computation produced non-finite values."""
