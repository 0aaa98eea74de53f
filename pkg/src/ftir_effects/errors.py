"""Exception and warning types raised by the estimators and the CLI."""


class FtirError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(FtirError, ValueError):
    pass


class NonFiniteSignal(FtirError, ValueError):
    pass


class DegenerateSignal(FtirError, ValueError):
    """A signal is constant, so its 2x2 alignment normal matrix is singular."""

    def __init__(self, message, index=None, label=None):
        super().__init__(message)
        self.index = index
        self.label = label


class GeneratorError(FtirError, ValueError):
    pass


class FrameNotOrthonormal(FtirError, ValueError):
    pass


class EmptyCandidates(FtirError, ValueError):
    pass


class NearZeroSlope(FtirError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EigenGapWarning(UserWarning):
    """The two smallest admissible eigenvalues nearly coincide; template not unique."""


class SelectionFloorWarning(UserWarning):
    """No landscape minimum passed the |cos(phi)| floor; the floor was relaxed."""


class ParseError(FtirError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
