"""Exception hierarchy shared by all effica modules."""


class EfficaError(Exception):
    """Base class for every error raised by effica."""


class InvalidArgumentError(EfficaError, ValueError):
    pass


class DataError(EfficaError):
    """Input data that cannot be used as given (maps to CLI exit code 2)."""


class DegenerateSampleError(DataError):
    pass


class NumericError(EfficaError):
    """A numerical failure during estimation (maps to CLI exit code 3)."""


class SingularSystemError(NumericError):
    pass


class CVFailureError(NumericError):
    pass


class IllConditionedScaleError(NumericError):
    pass


class SingularMatrixError(NumericError):
    pass


class SingularInformationError(NumericError):
    pass


class RankDeficientError(NumericError):
    pass


class DegenerateAlignmentError(NumericError):
    pass
