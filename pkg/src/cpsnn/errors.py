"""Exception hierarchy shared across the package."""


class CPSNNError(Exception):
    """Base class for all package errors."""


class ConfigError(CPSNNError):
    """Inconsistent shapes, dimensions, or configuration values."""


class NumericsError(CPSNNError):
    """Non-finite values detected in state, inputs, or gradients."""


class ContractError(CPSNNError):
    """An argument fell outside its documented domain."""


class DataFormatError(CPSNNError):
    """Malformed dataset or model file."""


class InfeasibleScheduleError(CPSNNError):
    """A requested retention schedule cannot exist for the given decay."""
