class ConfigError(ValueError):
    """Invalid configuration value. The message names the offending field."""


class SchemaError(ValueError):
    """Snapshot document is malformed or references unknown entities."""


class InvariantError(ValueError):
    """A model invariant (e.g. 0 <= balance <= capacity) is violated."""


class MalformedRoute(ValueError):
    """Route handed to the forwarding engine breaks the route contract."""


class NoRoute(Exception):
    """No admissible path exists for the query."""


class IntervalClosed(Exception):
    """Estimate interval has collapsed; nothing left to probe."""
