"""Exception types shared across the package."""


class NormInNormError(ValueError):
    """Base class for all library errors."""


class InvalidExponent(NormInNormError):
    pass


class NonFiniteInput(NormInNormError):
    pass


class DegenerateBatch(NormInNormError):
    """Raised when a batch has (near-)zero centered norm, so normalization is undefined."""


class LengthMismatch(NormInNormError):
    pass


class InvalidBatchSize(NormInNormError):
    pass


class DimensionMismatch(NormInNormError):
    pass


class InvalidSpec(NormInNormError):
    pass


class SchemaError(NormInNormError):
    pass


class ParseError(NormInNormError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
