"""Exception types shared across the package."""


class HypothesisError(ValueError):
    """Input violates a structural assumption (potential, regime, geometry)."""


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class SolverError(RuntimeError):
    """A nonlinear solve failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
