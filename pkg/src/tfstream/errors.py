"""Exception hierarchy for the streaming framework.

Errors fall in two families: configuration/framework errors that abort a
run (bad graph, corrupted merge state) and per-chunk data problems that
the continuity protocol absorbs (losses, stale arrivals).
"""


class TFStreamError(Exception):
    """Base class for all framework errors."""


# --- chunk model ---------------------------------------------------------

class ShapeError(TFStreamError):
    """Payload empty or channel_freqs length does not match channel count."""


class MetadataError(TFStreamError):
    """Unknown continuity code or negative alignment counter."""


class TooShortError(TFStreamError):
    """Chunk time-length does not satisfy d + p < length."""


# --- alignment algebra ---------------------------------------------------

class EmptyInput(TFStreamError):
    """merge_params called with no inputs."""


class CounterOverflow(TFStreamError):
    """Alignment counter exceeded the configured maximum."""


class InconsistentParams(TFStreamError):
    """Merged params do not dominate chunk params; indicates a framework bug."""


# --- merge engine --------------------------------------------------------

class ProtocolError(TFStreamError):
    """Impossible continuity combination reached; indicates corrupted state."""


class InvalidInMerge(TFStreamError):
    """An invalid chunk (code -1) entered the merge process."""


class MissingTail(TFStreamError):
    """Regular continuous merge without a carried tail of the right length."""


class EmptyResult(TFStreamError):
    """Merge would produce a zero-length chunk; chunk size too small."""


# --- composite manager ---------------------------------------------------

class UnknownKey(TFStreamError):
    """Chunk delivered for a source key the consumer is not configured for."""


# --- graph / config ------------------------------------------------------

class ConfigError(TFStreamError):
    """Malformed pipeline configuration."""


class CycleError(ConfigError):
    """Processor graph contains a cycle."""


class UnknownProcessorKind(ConfigError):
    """Processor kind is not registered."""


class ChunkTooShortForDepth(ConfigError):
    """Configured chunk size cannot satisfy d + p < length at some consumer."""


# --- processors ----------------------------------------------------------

class UnsupportedFormat(TFStreamError):
    """Input file format not supported."""


class IoError(TFStreamError):
    """File could not be read or written."""


class NonIntegerRate(TFStreamError):
    """Resampling factor does not divide the input sample rate."""


class SpecMismatch(TFStreamError):
    """Incoming sample rate does not match the filterbank design rate."""


class TooFewChannels(TFStreamError):
    """Structure extraction needs at least 2*w_s + 1 channels."""


class ShapeMismatch(TFStreamError):
    """Merged representations disagree in shape; indicates a framework bug."""


class NotACalibrationChunk(TFStreamError):
    """Calibration requested on a chunk not flagged as calibration."""


class DeviceError(TFStreamError):
    """Live audio device failure."""


# --- wire ----------------------------------------------------------------

class WireError(TFStreamError):
    """Base class for frame decoding failures; a bad frame is dropped whole."""


class ChecksumError(WireError):
    """CRC32 mismatch over header + payload."""


class VersionError(WireError):
    """Frame version not understood."""


class TruncatedFrame(WireError):
    """Byte stream ended inside a frame."""
