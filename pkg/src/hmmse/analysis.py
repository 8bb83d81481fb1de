"""Source-filter parameter extraction: log-F0 tracks and mel-cepstra.

The two streams drive everything downstream: the pitch track shapes the
excitation, the mel-cepstrum sequence parameterizes the synthesis filter.
Mel-cepstral analysis fits a warped cosine basis to the log periodogram by
ridge-regularized weighted least squares, so analysis and the synthesis
filter share one spectral model exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .dsp import FrameConfig, Waveform, frame_signal
from .errors import ConfigError, EmptySignal

DEFAULT_ALPHA = 0.42     # mel-approximating all-pass constant at 16 kHz
DEFAULT_ORDER = 24
POWER_FLOOR = 1e-12
RIDGE_LAMBDA = 1e-6


@dataclass
class F0Track:
    """Per-frame voicing flags and natural-log pitch.

    log_f0 holds NaN at unvoiced frames; the voiced mask is authoritative
    and every consumer must respect it, so a missing mask shows up loudly
    as NaN rather than silently as 0 Hz.
    """

    frame_shift: int
    voiced: np.ndarray
    log_f0: np.ndarray

    def __post_init__(self):
        self.voiced = np.asarray(self.voiced, dtype=bool)
        self.log_f0 = np.asarray(self.log_f0, dtype=np.float64)
        if self.voiced.shape != self.log_f0.shape:
            raise ValueError("voiced and log_f0 must have equal length")

    def __len__(self) -> int:
        return len(self.voiced)

    def f0_hz(self) -> np.ndarray:
        """Pitch in Hz on voiced frames, NaN elsewhere."""
        out = np.full(len(self), np.nan)
        out[self.voiced] = np.exp(self.log_f0[self.voiced])
        return out


@dataclass
class MelCepstrumSequence:
    """Frames-by-(order+1) mel-cepstral coefficient matrix."""

    order: int
    alpha: float
    frame_shift: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.order + 1:
            raise ValueError("frames must be (T, order+1)")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("coefficients must be finite")
        if not -1 < self.alpha < 1:
            raise ValueError("alpha must lie in (-1, 1)")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class AnalysisConfig:
    f0_min: float = 60.0
    f0_max: float = 400.0
    vuv_threshold: float = 0.3
    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA
    fft_size: int = 512
    frame: FrameConfig = field(default_factory=FrameConfig)

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max:
            raise ConfigError("require 0 < f0_min < f0_max")
        if not 0 < self.vuv_threshold < 1:
            raise ConfigError("vuv_threshold must lie in (0, 1)")
        if not -1 < self.alpha < 1:
            raise ConfigError("alpha must lie in (-1, 1)")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.fft_size < self.frame.frame_length:
            raise ConfigError("fft_size must cover one frame")


def warp_frequency(omega: np.ndarray, alpha: float) -> np.ndarray:
    """All-pass phase map: omega + 2 atan(a sin w / (1 - a cos w))."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan2(alpha * np.sin(omega), 1.0 - alpha * np.cos(omega))


def warped_cosine_basis(fft_size: int, order: int, alpha: float) -> np.ndarray:
    """cos(m * warped(omega_k)) on the rfft grid, shape (bins, order+1)."""
    omega = np.linspace(0.0, np.pi, fft_size // 2 + 1)
    warped = warp_frequency(omega, alpha)
    return np.cos(np.outer(warped, np.arange(order + 1)))


_FIT_CACHE: dict = {}


def _fit_matrix(fft_size: int, order: int, alpha: float) -> np.ndarray:
    """Projection log-spectrum -> coefficients for the ridge LS fit.

    Endpoint bins get half weight so the half-spectrum fit reproduces the
    full-circle one; at alpha = 0 the fit then collapses to plain cepstral
    truncation.
    """
    key = (fft_size, order, round(alpha, 12))
    cached = _FIT_CACHE.get(key)
    if cached is not None:
        return cached
    basis = warped_cosine_basis(fft_size, order, alpha)
    weights = np.full(len(basis), 2.0)
    weights[0] = weights[-1] = 1.0
    gram = basis.T @ (weights[:, None] * basis)
    gram[np.diag_indices_from(gram)] += RIDGE_LAMBDA
    proj = np.linalg.solve(gram, basis.T * weights[None, :])
    _FIT_CACHE[key] = proj
    return proj


def estimate_f0(wf: Waveform, cfg: AnalysisConfig) -> F0Track:
    """Autocorrelation pitch tracker with voiced/unvoiced decision.

    A frame is voiced when the peak normalized autocorrelation inside the
    pitch lag range exceeds the threshold; the peak lag is refined by
    parabolic interpolation and the voiced contour is 5-point median
    smoothed.  Gain-invariant by construction.
    """
    if cfg.f0_max >= wf.sample_rate / 2:
        raise ConfigError("f0_max must stay below Nyquist")
    sr = wf.sample_rate
    # band-limit before correlating: keeps the first handful of harmonics,
    # which makes the peak robust to sub-sample pulse positions
    cutoff = min(5.0 * cfg.f0_max, 0.45 * sr)
    sos = sps.butter(4, cutoff, btype="lowpass", fs=sr, output="sos")
    low = sps.sosfiltfilt(sos, wf.samples) if len(wf.samples) else wf.samples
    raw_cfg = FrameConfig(cfg.frame.frame_length, cfg.frame.frame_shift, "rectangular")
    frames = frame_signal(Waveform(low, sr), raw_cfg)
    n_frames = len(frames)
    voiced = np.zeros(n_frames, dtype=bool)
    log_f0 = np.full(n_frames, np.nan)
    if n_frames == 0:
        return F0Track(cfg.frame.frame_shift, voiced, log_f0)

    lag_min = max(2, int(np.ceil(sr / cfg.f0_max)))
    lag_max = min(cfg.frame.frame_length - 2, int(np.floor(sr / cfg.f0_min)))
    if lag_min >= lag_max:
        raise ConfigError("pitch range too narrow for the frame length")

    frames = frames - frames.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * cfg.frame.frame_length)))
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spec.real**2 + spec.imag**2, axis=1)[:, : cfg.frame.frame_length]
    energy = acf[:, 0].copy()
    live = energy > 0
    acf[live] /= energy[live, None]

    band = acf[:, lag_min : lag_max + 1]
    peak_rel = np.argmax(band, axis=1)
    peak = peak_rel + lag_min
    peak_val = band[np.arange(n_frames), peak_rel]
    voiced = live & (peak_val > cfg.vuv_threshold)

    if np.any(voiced):
        idx = np.flatnonzero(voiced)
        p = peak[idx]
        left = acf[idx, p - 1]
        mid = acf[idx, p]
        right = acf[idx, p + 1]
        denom = left - 2.0 * mid + right
        offset = np.zeros(len(idx))
        ok = np.abs(denom) > 1e-12
        offset[ok] = 0.5 * (left[ok] - right[ok]) / denom[ok]
        offset = np.clip(offset, -0.5, 0.5)
        lag = p + offset
        f0 = np.clip(sr / lag, cfg.f0_min, cfg.f0_max)
        log_f0[idx] = np.log(f0)
        log_f0 = _median_smooth_runs(voiced, log_f0, width=5)

    return F0Track(cfg.frame.frame_shift, voiced, log_f0)


def _median_smooth_runs(voiced: np.ndarray, values: np.ndarray, width: int) -> np.ndarray:
    """Median-filter values inside each voiced run; windows clip at run edges."""
    out = values.copy()
    half = width // 2
    t = 0
    n = len(voiced)
    while t < n:
        if not voiced[t]:
            t += 1
            continue
        start = t
        while t < n and voiced[t]:
            t += 1
        run = values[start:t]
        smoothed = np.array(
            [np.median(run[max(0, i - half) : min(len(run), i + half + 1)]) for i in range(len(run))]
        )
        out[start:t] = smoothed
    return out


def mgc_analysis(wf: Waveform, cfg: AnalysisConfig) -> MelCepstrumSequence:
    """Mel-cepstral analysis of every frame.

    Per frame: periodogram (window-power normalized), natural-log amplitude,
    then a ridge-regularized weighted LS fit of the warped cosine basis.
    The zeroth coefficient carries the frame gain.
    """
    frames = frame_signal(wf, cfg.frame)
    if len(frames) == 0:
        raise EmptySignal("signal shorter than one analysis frame")
    window_power = np.sum(cfg.frame.window_values() ** 2)
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2 / window_power
    log_amp = 0.5 * np.log(np.maximum(power, POWER_FLOOR))
    proj = _fit_matrix(cfg.fft_size, cfg.order, cfg.alpha)
    coeffs = log_amp @ proj.T
    return MelCepstrumSequence(cfg.order, cfg.alpha, cfg.frame.frame_shift, coeffs)


def mc_to_envelope(frame: np.ndarray, alpha: float, fft_size: int) -> np.ndarray:
    """Log-magnitude envelope in dB on the rfft grid for one coefficient vector."""
    frame = np.asarray(frame, dtype=np.float64)
    basis = warped_cosine_basis(fft_size, len(frame) - 1, alpha)
    return (20.0 / np.log(10.0)) * (basis @ frame)
