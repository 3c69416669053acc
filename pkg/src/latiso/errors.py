"""Exception hierarchy.

``DataError`` subclasses map to CLI exit code 2 and ``DegenerateError``
subclasses to exit code 3.
"""


class LatisoError(Exception):
    pass


class DataError(LatisoError, ValueError):
    """Input data cannot support the requested computation."""


class DegenerateError(LatisoError, ArithmeticError):
    """A statistic is undefined for these data (zero variability, singularity)."""


class InvalidBlockSizeError(DataError):
    pass


class NonSquareBlockError(DataError):
    pass


class DegenerateRestrictionError(DataError):
    """Joint pair set over a lag set is empty."""


class EmptyLocationsError(DataError):
    pass


class TooFewPointsError(DataError):
    pass


class TooFewVectorsError(TooFewPointsError):
    pass


class GridTooSmallError(DataError):
    pass


class BlockTooSmallError(DataError):
    """Blocks cannot host every lag of the lag set."""


class SizeGuardError(DataError):
    pass


class ZeroScaleError(DegenerateError):
    pass


class SingularScatterError(DegenerateError):
    pass


class TooFewWeightedError(DegenerateError):
    pass


class IrreparableCovarianceError(DegenerateError):
    pass


class AllWindowsFailedError(DegenerateError):
    pass


class FactorizationError(DegenerateError):
    pass


class NoTestableContrastsError(DataError):
    pass
