"""Exception hierarchy shared across the package."""


class SppselError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SppselError, ValueError):
    """Inconsistent inputs: region mismatch, bad dimensions, invalid settings."""


class DomainError(SppselError, ValueError):
    """A location falls outside the region a field or pattern is defined on."""


class NumericError(SppselError, ArithmeticError):
    """Intensity underflow/overflow or other non-finite evaluation."""


class InitializationError(NumericError):
    """The sampler could not start from a finite log-likelihood."""


class GenerationError(NumericError):
    """Random field or point process generation failed."""


class FitError(NumericError):
    """A model fit failed; carries the model label."""

    def __init__(self, label, cause):
        super().__init__(f"fit of model {label} failed: {cause}")
        self.label = label
        self.cause = cause
