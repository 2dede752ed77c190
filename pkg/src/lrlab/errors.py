"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LabError(Exception):
    exit_code = 3


class ConfigError(LabError, ValueError):
    exit_code = 2


class DomainError(LabError, ValueError):
    """A parameter lies outside the mathematical domain of an operation."""
    exit_code = 2


class NumericalError(LabError, ArithmeticError):
    exit_code = 3


class FitError(NumericalError):
    pass


class FlowDomainError(NumericalError):
    """The coupling flow left its admissible domain (g <= 0)."""


class TuningError(NumericalError):
    pass


class ExtractionError(NumericalError):
    pass


class ConstructionError(NumericalError):
    pass


class ResourceError(LabError, MemoryError):
    exit_code = 4
