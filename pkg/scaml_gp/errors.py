class ScamlError(Exception):
    """Base class for every error raised by scaml_gp."""


class InvalidArgumentError(ScamlError, ValueError):
    """Shapes, indices or hyperparameters outside their documented domain."""


class NotPositiveDefiniteError(ScamlError):
    def __init__(self, message: str, jitter: float):
        super().__init__(f"{message} (last jitter tried: {jitter:g})")
        self.jitter = jitter


class StaleCacheError(ScamlError):
    """A PosteriorCache was used with inputs it was not built for."""


class ResourceLimitError(ScamlError):
    pass


class ExhaustedDomainError(ScamlError):
    """Every row of a discrete candidate table has already been queried."""


class OptimizationError(ScamlError):
    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class TabularError(ScamlError):
    def __init__(self, message: str, path: str, line: int | None = None):
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")
        self.path = path
        self.line = line


class TabularFormatError(TabularError):
    """The lookup-table file could not be parsed."""


class TabularValidationError(TabularError):
    """The lookup-table file parsed but violates uniqueness or finiteness."""
