"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for bad input data, 3 for numerical failures, 1 for usage/config problems.
"""


class MatInfoError(ValueError):
    exit_code = 2


class DataError(MatInfoError):
    exit_code = 2


class NumericalError(MatInfoError):
    exit_code = 3


# spectral core
class NonSymmetric(DataError):
    pass


class EigFailure(NumericalError):
    pass


class NotPSD(DataError):
    pass


class BadDiagonal(DataError):
    pass


class ZeroVariance(DataError):
    def __init__(self, dim, message=None):
        self.dim = dim
        super().__init__(message or f"feature dimension {dim} has zero variance across the batch")


class ZeroColumn(DataError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"column {index} has zero norm")


class SizeMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class SingularLog(NumericalError):
    pass


# measures
class BadAlpha(DataError):
    pass


class BadMu(DataError):
    pass


class SingularSecondArgument(NumericalError):
    pass


class AllZeroMatrix(DataError):
    pass


# losses
class BadTemperature(DataError):
    pass


class BadRatio(DataError):
    pass


class IndivisibleLength(DataError):
    pass


# sandbox
class DivergedLoss(NumericalError):
    """Raised when training produces a non-finite loss.

    ``trajectory`` holds every record written before the failure.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory or []


class DegenerateLabels(DataError):
    pass


class ConfigError(MatInfoError):
    exit_code = 1

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


# cli / io
class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class EmptyDirectory(DataError):
    pass


class MixedShapes(DataError):
    pass
