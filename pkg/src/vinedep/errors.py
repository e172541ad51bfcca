"""Exception hierarchy shared by all vinedep modules."""


class VineDepError(Exception):
    """Base class for every error raised by vinedep."""


class DataError(VineDepError):
    """Input data cannot be used (bad shape, missing values, degenerate columns)."""


class DegenerateColumn(DataError):
    def __init__(self, message="all samples are identical", column=None):
        self.column = column
        if column is not None:
            message = f"column {column!r}: {message}"
        super().__init__(message)


class InputOutOfRange(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InvalidParameter(VineDepError, ValueError):
    pass


class UnattainableTau(VineDepError, ValueError):
    pass


class ConvergenceFailure(VineDepError):
    pass


class AllCandidatesFailed(VineDepError):
    pass


class EdgeFitError(VineDepError):
    """A per-edge failure with the edge identity attached."""

    def __init__(self, edge_label, cause):
        self.edge_label = edge_label
        self.cause = cause
        super().__init__(f"edge {edge_label}: {cause}")


class SingularCurvature(VineDepError):
    pass


class TestUnreliable(VineDepError):
    __test__ = False  # keep pytest from collecting this class


class CollinearDesign(VineDepError):
    pass


class SingularCovariance(VineDepError):
    pass


class NoOffScheduleUploads(VineDepError):
    pass
