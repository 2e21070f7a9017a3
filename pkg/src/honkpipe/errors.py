"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for bad or missing data, 4 for training divergence.
"""


class HonkPipeError(Exception):
    exit_code = 1
    module = "honkpipe"


class ConfigError(HonkPipeError):
    exit_code = 2
    module = "config"


class DataError(HonkPipeError):
    exit_code = 3


class TrainingDivergence(HonkPipeError):
    exit_code = 4
    module = "models"


# audio_io
class UnsupportedFormat(DataError):
    module = "audio_io"


class CorruptHeader(DataError):
    module = "audio_io"


class EmptyFile(DataError):
    module = "audio_io"


class RangeError(DataError, ValueError):
    module = "audio_io"

    def __init__(self, field, value, lo, hi, line_no=None):
        self.field = field
        self.value = value
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"{field}={value} outside [{lo}, {hi}]{where}")


class ClipShorterThanWindow(DataError):
    module = "audio_io"


# spectrogram
class WindowTooShort(DataError):
    module = "spectrogram"


# labeling
class InsufficientSamples(DataError):
    module = "labeling"


class ShapeMismatch(DataError):
    module = "labeling"


class MissingAmplitudeMetadata(DataError):
    module = "labeling"


class ModeCollapseDetected(TrainingDivergence):
    module = "labeling"

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


# augment
class MaskWiderThanAxis(DataError, ValueError):
    module = "augment"


class EmptyClass(DataError):
    module = "augment"


# models
class WeightManifestMismatch(DataError):
    module = "models"


class DivergedLoss(TrainingDivergence):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MemberOutputInvalid(DataError, ValueError):
    module = "models"


class NoTrainedModel(DataError):
    module = "models"


# context
class TooFewSamples(DataError, ValueError):
    module = "context"


class ZeroVariance(DataError, ValueError):
    module = "context"
