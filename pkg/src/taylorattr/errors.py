"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Dimension mismatch between vectors, layers or models."""


class ParameterError(ValueError):
    """Invalid configuration value (non-positive sigma, step count, ...)."""


class NumericError(ArithmeticError):
    """A function evaluation produced a non-finite value."""


class UnsupportedOrderError(ValueError):
    """Derivative order beyond what the routine supports."""


class ComplexityError(RuntimeError):
    """Multi-index enumeration would exceed the configured budget."""


class NonSmoothError(ArithmeticError):
    """Higher-order derivative requested at a ReLU kink."""


class ModelFormatError(ValueError):
    """Malformed or inconsistent model file."""


class TrainingError(RuntimeError):
    """Loss diverged during training."""


class PolynomialSyntaxError(ValueError):
    """Polynomial literal that does not follow the grammar."""
