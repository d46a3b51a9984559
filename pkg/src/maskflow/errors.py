"""Exception hierarchy shared across the toolkit.

Every error carries a stable machine-readable ``code`` so the HTTP layer
can map engine failures to structured responses without string matching.
"""


class MaskflowError(Exception):
    """Base class; ``code`` is a stable identifier, ``message`` is for humans."""

    code = "internal_error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ValidationError(MaskflowError):
    """A precondition on caller-supplied data failed."""

    code = "validation_error"


class ParseError(MaskflowError):
    """A file or payload could not be parsed."""

    code = "parse_error"


class StateError(MaskflowError):
    """Operation not valid in the current state (e.g. export before propagation)."""

    code = "invalid_state"


class BusyError(MaskflowError):
    """A conflicting job is already running on this resource."""

    code = "busy"


class NotFoundError(MaskflowError):
    """A referenced session/object/job does not exist."""

    code = "not_found"


class MigrationError(MaskflowError):
    """A persisted file carries an unsupported format version."""

    code = "version_mismatch"


class ProtocolError(MaskflowError):
    """Malformed message on the backend adapter wire."""

    code = "protocol_error"


class TrainingDiverged(MaskflowError):
    """Loss became non-finite during training."""

    code = "training_diverged"


class BackendUnavailableError(MaskflowError):
    """The external backend did not answer (timeout, refused connection)."""

    code = "backend_unavailable"
