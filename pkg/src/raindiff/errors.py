"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (schedule, network or run settings)."""


class ContractError(ValueError):
    """Inputs violate a shape or range precondition."""
