"""Exception types and the exit codes the command line maps them to."""


class AttrInferError(Exception):
    exit_code = 1


class ConfigurationError(AttrInferError, ValueError):
    exit_code = 2


class DimensionError(ConfigurationError):
    """Operand shapes do not line up."""


class SchemaError(AttrInferError, ValueError):
    """Data or parameters disagree with the attribute schema."""

    exit_code = 3


class ParseError(AttrInferError, ValueError):
    exit_code = 3


class NumericalError(AttrInferError, ArithmeticError):
    exit_code = 4


class DomainError(NumericalError):
    """An elementwise function was evaluated outside its domain."""
