"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ValueError):
    """Non-finite values where finite numbers are required."""


class ConfigError(ValueError):
    """Invalid configuration, spec, or file format."""


class DegenerateImageError(ValueError):
    """Image statistics make the requested transform undefined."""


class MetricUndefinedError(ValueError):
    """Metric is undefined for the given inputs (e.g. single-class ROC)."""


class DivergenceError(RuntimeError):
    """Training produced NaN/exploding losses or gradients."""
