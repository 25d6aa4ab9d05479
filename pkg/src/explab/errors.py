"""Exception types shared across the package."""


class ExplabError(Exception):
    """Base class for package errors."""


class ConfigError(ExplabError):
    """Invalid or unknown configuration."""


class EmptyPoolError(ExplabError):
    """Qualification produced an empty exploration pool."""


class PoolExhaustedError(ExplabError):
    """Could not sample enough distinct titles from the pool."""


class NoSafePlacementError(ExplabError):
    """No row satisfies both the reach and engagement-share constraints."""

    def __init__(self, message: str, feasible_dump: str = ""):
        super().__init__(message)
        self.feasible_dump = feasible_dump


class DegenerateSampleError(ExplabError):
    """Statistical comparison impossible (e.g. zero control mean)."""


class ManifestMismatchError(ExplabError):
    """Input artifact was produced under a different config or seed."""
