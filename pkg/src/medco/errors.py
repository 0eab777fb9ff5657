"""Exception types shared across the package."""


class MedcoError(Exception):
    """Base class for all package errors."""


class CorpusError(MedcoError):
    """Unreadable or malformed corpus input."""


class RecordValidationError(MedcoError):
    """A record (or corpus) failed invariant checks."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class PromptError(MedcoError):
    """Missing or unknown slot while rendering a prompt template."""


class ReportParseError(MedcoError):
    """Structured model output could not be parsed."""

    def __init__(self, message, raw_text=""):
        self.raw_text = raw_text
        super().__init__(message)


class SessionStateError(MedcoError):
    """Illegal phase transition or message on a closed session."""


class BackendError(MedcoError):
    """Provider call failed after retries, or returned a malformed payload."""

    def __init__(self, message, payload=None):
        self.payload = payload
        super().__init__(message)


class MissingFixtureError(BackendError):
    """Scripted backend has no reply registered for the requested key."""


class MemoryFormatError(MedcoError):
    """On-disk memory snapshot is corrupted or has an unknown version."""


class ToolError(MedcoError):
    """Image classification or interpretation failed."""
