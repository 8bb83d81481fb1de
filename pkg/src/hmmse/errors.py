"""Exception hierarchy for the toolkit.

Every error raised on a contract violation derives from HmmseError so
callers (and the CLI) can distinguish toolkit failures from genuine bugs.
"""


class HmmseError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HmmseError):
    """Invalid or out-of-range configuration value."""


# --- waveform / file I/O -------------------------------------------------

class NotFound(HmmseError):
    """Input file does not exist."""


class UnsupportedFormat(HmmseError):
    """WAV file is not 16-bit mono PCM."""


class CorruptHeader(HmmseError):
    """File is not a parseable RIFF/WAVE container."""


class IoError(HmmseError):
    """Filesystem write/read failure."""


# --- DSP ------------------------------------------------------------------

class InvalidFftSize(HmmseError):
    """FFT size is not a power of two or is smaller than the frame."""


class InvalidCutoff(HmmseError):
    """High-pass cutoff outside (0, Nyquist)."""


class SilentSignal(HmmseError):
    """Operation undefined on an all-zero signal."""


class EmptySignal(HmmseError):
    """Signal too short to produce a single analysis frame."""


# --- vocoder ---------------------------------------------------------------

class LengthMismatch(HmmseError):
    """Two sequences that must agree in length do not."""


class UnstableCoefficients(HmmseError):
    """Synthesis filter state exceeded the instability guard."""


# --- labels ----------------------------------------------------------------

class EmptyLabelFile(HmmseError):
    """Label file contains no labels."""


class MalformedLine(HmmseError):
    """Label or lexicon line does not parse."""

    def __init__(self, line_number, text):
        super().__init__(f"line {line_number}: {text!r}")
        self.line_number = line_number


class NonMonotonicTimes(HmmseError):
    """Label timestamps overlap or run backwards."""


class OutOfVocabulary(HmmseError):
    """Word has no lexicon entry."""

    def __init__(self, word):
        super().__init__(word)
        self.word = word


class EmptySequence(HmmseError):
    """Operation requires a nonempty sequence."""


# --- HMM training ------------------------------------------------------------

class TooShort(HmmseError):
    """Feature sequence too short for delta computation."""


class EmptyCorpus(HmmseError):
    """Training or statistics pass received no utterances."""


class DimensionMismatch(HmmseError):
    """Corpus feature width disagrees with model metadata."""


class NumericalUnderflow(HmmseError):
    """Log-domain probability computation degenerated; indicates a bug."""


class InsufficientData(HmmseError):
    """Adaptation set smaller than the transform parameter count."""


# --- alignment ---------------------------------------------------------------

class TooFewFrames(HmmseError):
    """Fewer frames than states to align."""


class UnalignableLabel(HmmseError):
    """Label phoneme unknown to the model (no backoff entry)."""


# --- parameter generation ------------------------------------------------------

class SingularSystem(HmmseError):
    """Banded normal equations failed to solve; indicates a bug."""


# --- evaluation ----------------------------------------------------------------

class EmptyBand(HmmseError):
    """Frequency band covers no spectrogram bin."""


# --- enhancement -----------------------------------------------------------------

class MissingCompetingSignal(HmmseError):
    """competing_speaker interference requested without a second waveform."""


class FrameCountMismatch(HmmseError):
    """Side-information track disagrees with the observed signal length."""


# --- CLI --------------------------------------------------------------------------

class UnknownSubcommand(HmmseError):
    """First CLI argument is not a recognized subcommand."""
