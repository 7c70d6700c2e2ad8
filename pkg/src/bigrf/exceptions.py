"""Exception hierarchy for bigrf."""


class BigRFError(ValueError):
    """Base class for every error raised on purpose by this package."""


class DataError(BigRFError):
    """Malformed or infeasible input data."""

    def __init__(self, message, row=None):
        if row is not None:
            message = "row {}: {}".format(row, message)
        super().__init__(message)
        self.row = row


class PlanError(BigRFError):
    """Resampling plan or forest configuration that cannot be honoured."""


class FormatError(BigRFError):
    """Corrupt or unsupported serialized model."""


class UnavailableError(BigRFError):
    """An estimate was requested but there is nothing to compute it from."""
