"""Exception hierarchy. Every error carries a stable ``code`` for reports and exit handling."""

from __future__ import annotations


class CuakitError(Exception):
    code = "error"


class DomainError(CuakitError, ValueError):
    code = "domain_error"


class UnsupportedActionError(CuakitError, ValueError):
    code = "unsupported_action"


class ActionParseError(CuakitError, ValueError):
    code = "parse_error"

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class NoActionError(CuakitError, ValueError):
    code = "no_action"


class DemoFormatError(CuakitError):
    code = "unreadable"


class AlignmentError(CuakitError):
    code = "alignment_error"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ImageIOError(CuakitError, OSError):
    code = "io_error"


class CueNotApplicable(CuakitError, ValueError):
    code = "cue_not_applicable"


class BackendError(CuakitError):
    code = "backend_error"


class VerdictParseError(CuakitError, ValueError):
    code = "verdict_parse_error"


class EmissionError(CuakitError):
    code = "emission_error"


class InputError(CuakitError, ValueError):
    code = "input_error"
