"""Exception types shared across the package."""


class ScanweaveError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(ScanweaveError, ValueError):
    """Operands have incompatible shapes."""


class ParameterError(ScanweaveError, ValueError):
    """A scalar parameter is outside its allowed range."""


class DegenerateInputError(ScanweaveError, ValueError):
    """Input is structurally valid but carries no usable signal (e.g. an all-zero map)."""


class IndexRangeError(ScanweaveError, IndexError):
    """A pixel index falls outside the addressed image."""


class EmptyMaskError(ScanweaveError, ValueError):
    """An operation that needs at least one sampled pixel received none."""


class TrainingDivergenceError(ScanweaveError, RuntimeError):
    """Non-finite activations or loss encountered during training."""


class UndefinedMetricError(ScanweaveError, ValueError):
    """A metric has no defined value on the given inputs."""


class FormatError(ScanweaveError, ValueError):
    """A file does not conform to its declared binary/ASCII layout."""
