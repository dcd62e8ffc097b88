"""Exception types shared across the package."""


class InputDomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class ParseError(InputDomainError):
    """A data file row could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ConfigError(ValueError):
    """Invalid run configuration or model parameter."""


class OracleLimitError(RuntimeError):
    """Exhaustive enumeration would exceed the configured limit."""

    def __init__(self, required, limit):
        self.required = required
        self.limit = limit
        super().__init__(
            f"exhaustive search needs {required} assignments, limit is {limit}"
        )
