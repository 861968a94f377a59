"""Exception types. ``category`` is the machine-readable tag printed by the CLI."""


class HyperCFError(Exception):
    category = "error"


class DataError(HyperCFError):
    category = "data"


class ConfigError(HyperCFError, ValueError):
    category = "config"


class FormatError(HyperCFError):
    """A split or checkpoint file is missing, truncated or of the wrong kind."""

    category = "format"
