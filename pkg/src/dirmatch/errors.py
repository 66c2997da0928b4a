"""Exception types raised across the package."""


class DirMatchError(Exception):
    """Base class for all errors raised by dirmatch."""


class ParseError(DirMatchError):
    """A shape, correspondence or config file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DegenerateGeometry(DirMatchError):
    """Zero-area faces or otherwise unusable geometry."""

    def __init__(self, message, indices=()):
        self.indices = list(indices)
        super().__init__(message)


class DegenerateNeighborhood(DirMatchError):
    """A point neighborhood is collinear, coincident or too sparse."""


class IndexOutOfRange(DirMatchError, IndexError):
    pass


class DisconnectedMesh(DirMatchError):
    pass


class ConvergenceFailure(DirMatchError):
    """The eigensolver did not deliver the requested eigenpairs."""

    def __init__(self, message, converged=0):
        self.converged = converged
        super().__init__(message)


class EmptyNeighborhood(DirMatchError):
    pass


class EmptyAnchorSet(DirMatchError):
    pass


class DimensionMismatch(DirMatchError, ValueError):
    pass


class LengthMismatch(DirMatchError, ValueError):
    pass


class BudgetExceeded(DirMatchError, ValueError):
    pass


class ConfigError(DirMatchError, ValueError):
    pass


class RankDeficiencyWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
