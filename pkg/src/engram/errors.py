"""Exception types shared across the package."""


class EngramError(Exception):
    """Base class for all package errors."""


class InvalidStateError(EngramError):
    """Representation-layer state contains non-finite entries."""


class ConfigurationError(EngramError):
    """Dimension mismatch or invalid configuration value."""


class DomainError(EngramError):
    """A domain is empty or otherwise unusable for decoding."""


class ParameterError(EngramError):
    """A decode or update parameter is out of its legal range."""


class UnknownIndexError(EngramError, KeyError):
    """Lookup of an index that is not registered."""


class DuplicateNameError(EngramError):
    """An index name is already taken within its kind."""


class UndefinedProbabilityError(EngramError):
    """Conditional probability requested for a context with no recorded events."""


class SnapshotError(EngramError):
    """Snapshot payload is corrupt or carries an unsupported version."""


class ScenarioError(EngramError):
    """Scenario or task-script document is malformed."""
