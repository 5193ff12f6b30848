class StochflowError(Exception):
    pass


class InputError(StochflowError, ValueError):
    """Raised when an operation receives arguments that violate its preconditions."""


class ConfigError(InputError):
    def __init__(self, message, *, field=None, source=None, line=None):
        self.field = field
        self.source = source
        self.line = line
        location = []
        if source:
            location.append(str(source))
        if line:
            location.append(f'line {line}')
        if field:
            location.append(f'field {field!r}')
        if location:
            message = f'{message} ({", ".join(location)})'
        super().__init__(message)


class NumericalAbort(StochflowError, ArithmeticError):
    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)


class NonContractionError(NumericalAbort):
    """Picard iteration failed to contract.

    ``history`` holds the successive distances, ``ratios`` the quotients of
    consecutive distances, and ``trace`` the full iteration record when the
    failing loop keeps one.
    """

    def __init__(self, message, *, history, trace=None):
        self.history = list(history)
        self.ratios = [b / a if a else float('inf') for a, b in zip(self.history, self.history[1:])]
        self.trace = trace
        super().__init__(message, history=self.history, ratios=self.ratios)


EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InputError):
        return EXIT_USAGE
    if isinstance(exc, NumericalAbort):
        return EXIT_NUMERICAL
    raise exc
