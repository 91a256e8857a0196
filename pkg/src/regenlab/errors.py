"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key or constraint."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalDomainError(ValueError):
    pass


class CouplingError(RuntimeError):
    """Forced-bridge rejection sampling hit its proposal cap."""

    def __init__(self, interval, tries, replicate=None):
        self.interval = interval
        self.tries = tries
        self.replicate = replicate
        where = f"unit interval {interval}"
        if replicate is not None:
            where = f"replicate {replicate}, " + where
        super().__init__(f"bridge sampling failed after {tries} proposals ({where})")


class InsufficientDataError(ValueError):
    pass
