"""Exception types raised across the package.

Every error derives from :class:`EnoseError`, which is also a ``ValueError``
so callers that only care about bad input can catch the builtin.
"""


class EnoseError(ValueError):
    pass


class NonPositiveCode(EnoseError):
    """ADC code at or below ground."""


class SaturatedCode(EnoseError):
    """ADC code clipped at positive full scale."""


class OutOfRange(EnoseError):
    pass


class ZeroBaseline(EnoseError):
    pass


class InvalidStep(EnoseError):
    pass


class NonFiniteInput(EnoseError):
    pass


class TimestampMismatch(EnoseError):
    """Measurement does not sit one filter step after the current state."""


class NoOnsetFound(EnoseError):
    pass


class InvalidKinetics(EnoseError):
    pass


class EmptySpan(EnoseError):
    pass


class NoTrials(EnoseError):
    pass


class ConfigError(EnoseError):
    """Invalid or unknown configuration key/value."""


class SchemaError(EnoseError):
    """CSV input does not match the expected layout or ordering."""
