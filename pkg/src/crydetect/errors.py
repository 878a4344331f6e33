"""Error taxonomy for the cry detection toolkit.

Every error raised on purpose derives from CrydetectError so the CLI can
catch one type, print the message to stderr and exit with status 2.
"""


class CrydetectError(Exception):
    """Base class for all toolkit errors."""


class AudioFormatError(CrydetectError):
    """Unsupported audio encoding. Names the offending format field."""

    def __init__(self, field, value, message=None):
        self.field = field
        self.value = value
        msg = message or "unsupported value for %s: %r" % (field, value)
        super().__init__(msg)


class AudioParseError(CrydetectError):
    """Malformed or truncated audio container. Carries the byte offset."""

    def __init__(self, message, byte_offset):
        self.byte_offset = byte_offset
        super().__init__("%s (at byte offset %d)" % (message, byte_offset))


class ManifestError(CrydetectError):
    """Invalid dataset manifest (bad header, labels, duplicates, splits)."""


class EmbeddingFormatError(CrydetectError):
    """Embedding sidecar file violates the W2VE format."""


class SchemaError(CrydetectError):
    """Feature blocks do not match the declared schema."""


class ParameterError(CrydetectError):
    """Out-of-range or inconsistent processing parameter."""


class ConfigError(CrydetectError):
    """Bad run configuration: unknown key, wrong type, bad range."""


class TrainingError(CrydetectError):
    """Training cannot proceed (single-class targets, no usable data...)."""


class EvaluationError(CrydetectError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


class ConvergenceError(TrainingError):
    """Iterative optimizer hit its iteration cap. Carries the count."""

    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__("%s (after %d iterations)" % (message, iterations))


class ModelFormatError(CrydetectError):
    """Model container is corrupt, truncated or of an unsupported version."""
