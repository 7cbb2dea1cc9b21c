class ConfigError(ValueError):
    """An invalid configuration file, section, key, or value."""


class NumericFailure(RuntimeError):
    """A numerical routine could not produce a result (singular matrix, solver breakdown)."""
