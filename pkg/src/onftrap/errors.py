"""Exception hierarchy. ``exit_code`` maps onto the CLI's process exit status."""


class OnfTrapError(Exception):
    exit_code = 2


class ValidationError(OnfTrapError, ValueError):
    exit_code = 1


class NumericalError(OnfTrapError, ArithmeticError):
    exit_code = 2


class ResonanceError(NumericalError):
    pass


class DispersiveRegimeError(NumericalError):
    pass


class MultimodeError(NumericalError):
    pass


class NoGuidedModeError(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class ResolutionError(NumericalError):
    pass


class NoTrapError(NumericalError):
    pass


class SaddleError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class DegenerateWidthError(FitError):
    pass


class NoDecayError(FitError):
    pass


class SegmentError(NumericalError):
    pass
