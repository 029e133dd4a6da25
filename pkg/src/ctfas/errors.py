"""Exception types shared across the package.

Plain ``ValueError`` is used for bad arguments to individual operations;
the classes below mark conditions a caller may want to route differently
(the CLI maps all of them except ``NumericsError`` to exit code 2).
"""


class ConfigError(Exception):
    """A configuration object or file is invalid or inconsistent."""


class FormatError(Exception):
    """An on-disk artifact has a bad magic number, header, or schema."""


class IntegrityError(Exception):
    """An on-disk artifact parses but its contents are inconsistent."""


class StateError(Exception):
    """An operation was invoked in a state that forbids it."""


class MetricError(Exception):
    """A metric is undefined on the given inputs (e.g. a class is absent)."""


class NumericsError(Exception):
    """Training produced a non-finite value; maps to CLI exit code 3."""
