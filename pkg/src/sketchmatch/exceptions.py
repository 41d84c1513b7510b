"""Exception hierarchy shared across the package.

Every error carries the CLI exit code it maps to so the command-line
front end does not need a lookup table.
"""


class SketchMatchError(Exception):
    exit_code = 2


class ConfigurationError(SketchMatchError, ValueError):
    exit_code = 1


class DataError(SketchMatchError):
    """Problems with input data: manifests, images, galleries."""


class SchemaError(DataError, ValueError):
    pass


class IntegrityError(DataError, ValueError):
    pass


class DimensionError(DataError, ValueError):
    pass


class DomainError(SketchMatchError, ValueError):
    pass


class SamplingError(DataError, ValueError):
    pass


class IncompatibleCheckpointError(DataError):
    pass


class FingerprintMismatchError(DataError):
    pass


class NumericError(SketchMatchError, ArithmeticError):
    exit_code = 3
