"""Exception hierarchy shared across the package."""


class KrigeBenchError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(KrigeBenchError):
    pass


class InvalidDomainError(KrigeBenchError):
    pass


class OutOfDomainError(KrigeBenchError):
    pass


class InsufficientDataError(KrigeBenchError):
    pass


class SingularFitError(KrigeBenchError):
    """Rank-deficient least-squares design; carries a condition estimate."""

    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class InvalidLagError(KrigeBenchError):
    pass


class EmptyVariogramError(KrigeBenchError):
    pass


class FitFailureError(KrigeBenchError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class SingularSystemError(KrigeBenchError):
    """Numerically singular kriging/solver matrix; carries a condition estimate."""

    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class InadmissibleWeightBasisError(KrigeBenchError):
    pass


class InvalidCovarianceError(KrigeBenchError):
    pass


class DegenerateResidualsError(KrigeBenchError):
    pass


class SimulationFailureError(KrigeBenchError):
    pass


class DatasetParseError(KrigeBenchError):
    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class DuplicateKeyError(DatasetParseError):
    pass
