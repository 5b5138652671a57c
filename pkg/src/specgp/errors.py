class SpecGPError(Exception):
    """Base class for every error raised by specgp."""

    pass


class DomainError(SpecGPError, ValueError):
    """Signal that an input lies outside an operation's domain."""

    pass


class RuleFormatError(SpecGPError, ValueError):
    """Signal that a rule file could not be parsed."""

    def __init__(self, message: str = "", line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BuildError(SpecGPError):
    """Signal that quadrature construction failed in a named stage."""

    def __init__(self, stage: str, message: str = "") -> None:
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class NufftError(SpecGPError):
    """Signal that an exponential-sum plan cannot be built."""

    def __init__(self, message: str = "", grid_size: int = 0) -> None:
        self.grid_size = grid_size
        super().__init__(message)


class NumericalError(SpecGPError):
    """Signal a numerical failure (non-PSD system, NaN objective, ...)."""

    pass
