"""Waveform I/O, framing, spectrograms and filtering.

The DSP substrate the rest of the toolkit builds on.  Audio lives in a
Waveform (normalized float samples plus a sample rate); all file exchange
is 16-bit mono RIFF/WAVE.  The canonical operating point is 16 kHz with
25 ms Hamming frames shifted by 5 ms.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import (
    CorruptHeader,
    InvalidCutoff,
    InvalidFftSize,
    IoError,
    NotFound,
    SilentSignal,
    UnsupportedFormat,
)

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_FRAME_LENGTH = 400   # 25 ms at 16 kHz
DEFAULT_FRAME_SHIFT = 80     # 5 ms at 16 kHz
SPECTROGRAM_FLOOR_DB = -100.0

WINDOWS = ("hamming", "hann", "rectangular")


@dataclass
class Waveform:
    """Mono audio: float samples in [-1, 1] and the sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrameConfig:
    """Short-time analysis grid: frame length/shift in samples plus window."""

    frame_length: int = DEFAULT_FRAME_LENGTH
    frame_shift: int = DEFAULT_FRAME_SHIFT
    window: str = "hamming"

    def __post_init__(self):
        if not 0 < self.frame_shift <= self.frame_length:
            raise ValueError("require 0 < frame_shift <= frame_length")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")

    def window_values(self) -> np.ndarray:
        if self.window == "hamming":
            return np.hamming(self.frame_length)
        if self.window == "hann":
            return np.hanning(self.frame_length)
        return np.ones(self.frame_length)


@dataclass
class Spectrogram:
    """Frames-by-bins magnitude matrix in dB, floored at floor_db."""

    magnitudes_db: np.ndarray
    bin_hz: float
    frame_shift: int
    floor_db: float = SPECTROGRAM_FLOOR_DB


def read_wav(path) -> Waveform:
    """Read a 16-bit mono PCM WAV file.

    Samples are scaled by 1/32768 into [-1, 1).  Stereo, non-16-bit and
    compressed files are rejected with UnsupportedFormat.
    """
    try:
        handle = open(path, "rb")
    except FileNotFoundError as exc:
        raise NotFound(str(path)) from exc
    with handle:
        try:
            reader = wave.open(handle, "rb")
        except (wave.Error, EOFError) as exc:
            raise CorruptHeader(f"{path}: {exc}") from exc
        with reader:
            if reader.getcomptype() != "NONE":
                raise UnsupportedFormat(f"{path}: compressed WAV")
            if reader.getnchannels() != 1:
                raise UnsupportedFormat(f"{path}: expected mono")
            if reader.getsampwidth() != 2:
                raise UnsupportedFormat(
                    f"{path}: expected 16-bit PCM, got {8 * reader.getsampwidth()}-bit"
                )
            rate = reader.getframerate()
            raw = reader.readframes(reader.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(wf: Waveform, path) -> int:
    """Write 16-bit mono PCM.  Returns the number of hard-clipped samples.

    Quantization is round(x * 32768) clipped to int16, which makes
    write-then-read idempotent after the first quantization; values at or
    above full scale clip to 32767 and are counted.
    """
    scaled = np.round(wf.samples * 32768.0)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    try:
        with open(path, "wb") as handle:
            with wave.open(handle, "wb") as writer:
                writer.setnchannels(1)
                writer.setsampwidth(2)
                writer.setframerate(wf.sample_rate)
                writer.writeframes(pcm.tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return clipped


def frame_signal(wf: Waveform, cfg: FrameConfig) -> np.ndarray:
    """Slice into overlapping windowed frames, shape (frames, frame_length).

    Frame count is floor((len - frame_length) / frame_shift) + 1; a signal
    shorter than one frame yields an empty (0, frame_length) array.
    """
    x = wf.samples
    if len(x) < cfg.frame_length:
        return np.empty((0, cfg.frame_length))
    count = (len(x) - cfg.frame_length) // cfg.frame_shift + 1
    idx = np.arange(cfg.frame_length)[None, :] + cfg.frame_shift * np.arange(count)[:, None]
    return x[idx] * cfg.window_values()[None, :]


def spectrogram(
    wf: Waveform,
    cfg: FrameConfig,
    fft_size: int = 512,
    normalize: bool = False,
    floor_db: float = SPECTROGRAM_FLOOR_DB,
) -> Spectrogram:
    """Short-time magnitude spectrogram in dB, floored at floor_db.

    With normalize=True the waveform is peak-normalized to 1.0 first so
    spectrograms of differently scaled recordings share one dB scale.
    """
    if fft_size < cfg.frame_length or fft_size & (fft_size - 1) != 0:
        raise InvalidFftSize(f"fft_size {fft_size} (frame length {cfg.frame_length})")
    if normalize:
        wf = normalize_peak(wf, 1.0)
    frames = frame_signal(wf, cfg)
    mag = np.abs(np.fft.rfft(frames, n=fft_size, axis=1))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    db = np.maximum(db, floor_db)
    return Spectrogram(db, wf.sample_rate / fft_size, cfg.frame_shift, floor_db)


def highpass(wf: Waveform, cutoff: float) -> Waveform:
    """Fourth-order Butterworth high-pass (two biquads), zero initial state.

    Removes DC and low rumble before model training without touching the
    pitch range; response is -3 dB at the cutoff.
    """
    if not 0 < cutoff < wf.sample_rate / 2:
        raise InvalidCutoff(f"cutoff {cutoff} Hz at {wf.sample_rate} Hz")
    sos = sps.butter(4, cutoff, btype="highpass", fs=wf.sample_rate, output="sos")
    return Waveform(sps.sosfilt(sos, wf.samples), wf.sample_rate)


def normalize_peak(wf: Waveform, target_peak: float = 1.0) -> Waveform:
    """Scale so max |sample| equals target_peak.  Raises on all-zero input."""
    if not 0 < target_peak <= 1:
        raise ValueError("target_peak must lie in (0, 1]")
    peak = np.max(np.abs(wf.samples)) if len(wf.samples) else 0.0
    if peak == 0.0:
        raise SilentSignal("cannot normalize an all-zero signal")
    return Waveform(wf.samples * (target_peak / peak), wf.sample_rate)
