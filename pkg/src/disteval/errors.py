class DistEvalError(ValueError):
    """Base class for all input and validation failures."""

    kind = "error"


class ParseError(DistEvalError):
    kind = "parse"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DistEvalError):
    kind = "validation"
