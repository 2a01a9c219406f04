"""
Errors - Exception hierarchy for the LSOR toolkit
Every failure raised by the library derives from LsorError
"""


class LsorError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LsorError, ValueError):
    """A primitive received operands whose shapes do not conform."""


class GradientError(LsorError, ValueError):
    """Backward pass or optimizer step misuse (non-scalar root, missing grad)."""


class NumericalError(LsorError, ValueError):
    """Non-finite or degenerate numeric input."""


class ConfigError(LsorError, ValueError):
    """Invalid or malformed configuration."""


class DataError(LsorError, ValueError):
    """Cohort generation, sampling or cohort file problems."""


class SomError(LsorError, ValueError):
    """SOM grid, schedule or k-means initialization problems."""


class TrainingError(LsorError):
    """Training aborted (for example a non-finite loss component)."""


class CheckpointError(LsorError, ValueError):
    """Checkpoint file is missing fields or has an unknown version."""


class AnalysisError(LsorError, ValueError):
    """Evaluation input is empty, degenerate or mismatched."""
