class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class InvalidCaseError(ValidationError):
    """An exit-probability case shift produced a negative Binomial size."""


class MixingTimeError(RuntimeError):
    """The mixing-time search hit its iteration cap.

    ``bracket`` holds ``(lo, hi)`` with ``d(lo) > eps`` known; ``hi`` is the
    last time examined (``None`` if no time with ``d <= eps`` was found).
    """

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket
