"""Exception hierarchy."""


class HeterotopyError(Exception):
    """Base class for all library errors."""


class ParameterError(HeterotopyError, ValueError):
    pass


class ResourceError(HeterotopyError):
    pass


class ChartError(HeterotopyError, ValueError):
    pass


class CompositionError(HeterotopyError):
    pass


class SurgeryError(HeterotopyError):
    pass


class UnsupportedError(HeterotopyError, NotImplementedError):
    pass


class NumericError(HeterotopyError, ArithmeticError):
    pass
