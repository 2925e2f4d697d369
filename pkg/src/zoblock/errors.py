class ConfigurationError(ValueError):
    """Invalid problem, set, solver or experiment configuration."""


class NumericalError(RuntimeError):
    """Non-finite values appeared in the iterates or estimates."""


class DiagnosticUnavailable(RuntimeError):
    """A diagnostic was requested without the data it needs."""


class AnalysisError(ValueError):
    """Not enough data for a requested analysis."""
