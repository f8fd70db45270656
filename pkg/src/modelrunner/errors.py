"""Exception hierarchy for the model runner.

Every failure the package raises on purpose derives from
:class:`ModelRunnerError`.  ``http_status`` is what the HTTP layer answers
when the error escapes a request handler: 400 for bad request data, 422 for
artifacts (proto files, models, configs, bundles) that fail validation,
404/500/503 for lookup and server-side conditions.
"""


class ModelRunnerError(Exception):
    http_status = 400


# --- proto schema parsing ---------------------------------------------------

class ProtoSyntaxError(ModelRunnerError):
    """Malformed proto text; message includes line and column."""
    http_status = 422

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class UnsupportedFeature(ProtoSyntaxError):
    """Proto construct outside the supported subset (never silently dropped)."""


class DuplicateTag(ModelRunnerError):
    http_status = 422


class DuplicateName(ModelRunnerError):
    http_status = 422


class InvalidTag(ModelRunnerError):
    http_status = 422


class MessageNotFound(ModelRunnerError):
    http_status = 422


# --- wire codec --------------------------------------------------------------

class ValueKindMismatch(ModelRunnerError):
    pass


class TruncatedInput(ModelRunnerError):
    pass


class MalformedVarint(ModelRunnerError):
    pass


class WireTypeMismatch(ModelRunnerError):
    pass


class InvalidUtf8(ModelRunnerError):
    pass


class TruncatedFrame(ModelRunnerError):
    pass


# --- tabular codec -----------------------------------------------------------

class RepeatedFieldUnsupported(ModelRunnerError):
    pass


class ColumnCountMismatch(ModelRunnerError):
    pass


class HeaderFieldUnknown(ModelRunnerError):
    pass


class CoercionError(ModelRunnerError):
    pass


class JsonSyntaxError(ModelRunnerError):
    pass


class UnknownKey(ModelRunnerError):
    pass


class ArrayForScalarField(ModelRunnerError):
    pass


# --- predictor ---------------------------------------------------------------

class PpfSyntaxError(ModelRunnerError):
    http_status = 422


class PpfVersionUnsupported(ModelRunnerError):
    http_status = 422


class PpfValidationError(ModelRunnerError):
    http_status = 422


class MissingFeature(ModelRunnerError):
    pass


class NonNumericFeature(ModelRunnerError):
    pass


class NaNFeature(ModelRunnerError):
    pass


class NonFiniteResult(ModelRunnerError):
    pass


class OutputFieldMissingFromSchema(ModelRunnerError):
    http_status = 422


# --- bundle ------------------------------------------------------------------

class ArchiveMalformed(ModelRunnerError):
    http_status = 422


class MemberMissing(ModelRunnerError):
    http_status = 422


class CrossValidationError(ModelRunnerError):
    http_status = 422


class ConfigError(ModelRunnerError):
    http_status = 422


class MetadataError(ModelRunnerError):
    http_status = 422


# --- artifact store ----------------------------------------------------------

class InvalidBundle(ModelRunnerError):
    http_status = 422


class StoreIoError(ModelRunnerError):
    http_status = 500


class VersionNotFound(ModelRunnerError):
    http_status = 404


class HashMismatch(ModelRunnerError):
    http_status = 500


# --- swap manager / serving --------------------------------------------------

class NotInitialized(ModelRunnerError):
    http_status = 503


class UnknownOperation(ModelRunnerError):
    pass


class PostSwapRequestError(ModelRunnerError):
    """Request failed after its model install already took effect.

    The install stands; ``epoch`` reports the epoch the failed request ran at.
    """

    def __init__(self, epoch, cause):
        super().__init__(f"request failed after install at epoch {epoch}: {cause}")
        self.epoch = epoch
        self.cause = cause


# --- HTTP / CLI plumbing -----------------------------------------------------

class BadRequest(ModelRunnerError):
    """Request shape problems: missing or forbidden multipart parts, etc."""


class ServiceConfigError(ModelRunnerError):
    """Bad service configuration (file or flags); CLI exits 2 on this."""
