"""Engine errors with stable codes for the REPL."""

from __future__ import annotations


class EngineError(Exception):
    """Base for all recoverable engine errors; `code` is stable output."""

    code = "E-ENGINE"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def render(self) -> str:
        return f"error[{self.code}]: {self.message}"


class KbSyntaxError(EngineError):
    code = "E-PARSE"


class KbValidationError(EngineError):
    code = "E-KB"


class UnknownConceptError(KbValidationError):
    code = "E-KB"


class UnanalyzedInputError(EngineError):
    code = "E-UNANALYZED"


class UnresolvedFragmentError(EngineError):
    code = "E-FRAGMENT"


class RenderError(EngineError):
    code = "E-RENDER"


class CommandError(EngineError):
    code = "E-CMD"
