"""Exception types shared across the package."""


class E3MarlError(Exception):
    pass


class InvalidArgumentError(E3MarlError, ValueError):
    pass


class UnsupportedDegreeError(E3MarlError, ValueError):
    pass


class InvalidPathError(E3MarlError, ValueError):
    pass


class DegenerateDirectionError(E3MarlError, ValueError):
    pass


class ShapeError(E3MarlError, ValueError):
    pass


class SpecError(E3MarlError, ValueError):
    pass


class SymmetryViolationError(E3MarlError):
    """Raised when a game fails its group-equivariance audit."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class QuotientConstructionError(E3MarlError):
    pass


class UndefinedMeasureError(E3MarlError):
    pass


class ArchitectureIncompatibleError(E3MarlError):
    pass


class DivergenceError(E3MarlError, FloatingPointError):
    pass


class ConfigError(E3MarlError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
