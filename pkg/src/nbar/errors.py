"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad parameters, malformed model specs."""


class DataError(ValueError):
    """Invalid data: malformed tree files, duplicate or impossible nodes."""
