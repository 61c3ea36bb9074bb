"""Exception hierarchy shared by all oomcraft modules."""


class OomError(Exception):
    """Base class for every error raised by oomcraft."""


class InputError(OomError, ValueError):
    """Invalid input values (non-finite entries, empty data, unknown symbols)."""


class DimensionError(InputError):
    """Shapes or sizes that do not fit together."""


class RankDeficiencyError(OomError):
    """The empirical cross-moment matrix has fewer usable singular values than requested."""

    def __init__(self, rank, required):
        self.rank = rank
        self.required = required
        super().__init__(
            f"effective rank of C12 is {rank}, but model dimension m={required} was requested"
        )


class CapacityError(OomError):
    """A brute-force enumeration would exceed the allowed size."""


class RegularizationError(OomError):
    """A covariance matrix is singular and would need silent regularization."""


class ParseError(OomError):
    """Malformed file contents."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ConfigError(OomError):
    """Bad configuration file or command line value."""
