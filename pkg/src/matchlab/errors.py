"""Exception types shared across the package."""


class MatchlabError(Exception):
    """Base class for all package errors."""


class ValidationError(MatchlabError):
    """A region, config, or input file failed validation."""


class ConfigError(ValidationError):
    """An experiment config is malformed or references missing files."""


class UnboundedBiasError(MatchlabError):
    """Bias constants (alpha, beta) are undefined for the given populations."""
