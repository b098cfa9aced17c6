"""
Error types shared by the feedback-noise simulation modules.

Every error raised on purpose derives from FeedbackSimError so the CLI and the
HTTP service can translate them into exit codes / status codes in one place.
"""


class FeedbackSimError(Exception):
    """Base class for all simulation errors"""


class InvalidParameterError(FeedbackSimError, ValueError):
    """A scalar parameter is outside its allowed range"""


class AlignmentError(FeedbackSimError, ValueError):
    """A time is not on the simulation grid, or two grids disagree"""


class DomainError(FeedbackSimError, ValueError):
    """A formula was evaluated outside its validity window"""


class InsufficientDataError(FeedbackSimError):
    """Not enough samples to form an estimate"""


class ConfigError(InvalidParameterError):
    """Malformed scenario configuration"""


class QuadratureError(FeedbackSimError):
    """Grid refinement did not reach the requested tolerance"""

    def __init__(self, message: str, residual: float, level: int):
        super().__init__(f"{message} (residual={residual:.3e}, refinement level={level})")
        self.residual = residual
        self.level = level


EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code"""
    if isinstance(error, QuadratureError):
        return EXIT_CONVERGENCE
    if isinstance(error, (InvalidParameterError, AlignmentError, DomainError, InsufficientDataError)):
        return EXIT_VALIDATION
    return EXIT_IO
