"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericError(ValueError):
    """Non-finite values where finite numerics are required."""
