"""Exception hierarchy shared by all skullmatch modules.

Three failure families map onto the CLI exit codes: bad arguments or
shapes (2), malformed manifests / protocol violations (3), and numerical
breakdowns such as singular systems (4).
"""


class SkullMatchError(Exception):
    """Base class for all library errors."""


class ArgumentError(SkullMatchError, ValueError):
    """Invalid argument: bad shape, out-of-range parameter, non-finite input."""


class DataError(SkullMatchError):
    """Malformed manifest, unreadable image, or inconsistent dataset."""


class ProtocolError(DataError):
    """Evaluation protocol violated (missing mate, empty gallery, ...)."""


class NumericalError(SkullMatchError, ArithmeticError):
    """Numerical failure: singular matrix, lost monotonicity, overflow."""
