class ConfigError(ValueError):
    """Inconsistent model, schema or run configuration."""
