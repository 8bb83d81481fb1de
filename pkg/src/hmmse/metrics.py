"""Objective metrics and diagnostics: mel-cepstral distortion, pitch
errors, band energies, spike detection and spectrogram export.

Spectrograms export as a CSV matrix plus an 8-bit PGM image, and the
report path can additionally render PNG figures next to the delimited
output for quick visual comparison.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .analysis import F0Track, MelCepstrumSequence
from .dsp import Spectrogram, Waveform
from .errors import EmptyBand, IoError, LengthMismatch

MCD_CONSTANT = 10.0 / np.log(10.0)

# Bands where average-voice spectra tend to lose formant energy relative
# to the source speaker, plus the low band hit by the training high-pass.
LOW_BAND_HZ = (0.0, 100.0)
FORMANT_BANDS_HZ = ((2375.0, 2625.0), (3000.0, 3500.0))


@dataclass
class MetricReport:
    mcd_db: float
    f0_rmse_hz: float
    vuv_error_pct: float
    band_energies_db: list = field(default_factory=list)
    spikes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mcd_db": self.mcd_db,
            "f0_rmse_hz": self.f0_rmse_hz,
            "vuv_error_pct": self.vuv_error_pct,
            "band_energies_db": [
                {"lo_hz": lo, "hi_hz": hi, "mean_db": db}
                for lo, hi, db in self.band_energies_db
            ],
            "spikes": [int(i) for i in self.spikes],
        }


def mcd(a: MelCepstrumSequence, b: MelCepstrumSequence) -> float:
    """Mel-cepstral distortion in dB, gain coefficient excluded."""
    if len(a) != len(b) or a.order != b.order:
        raise LengthMismatch(
            f"sequences differ: {len(a)}x{a.order + 1} vs {len(b)}x{b.order + 1}"
        )
    diff = a.frames[:, 1:] - b.frames[:, 1:]
    return float(np.mean(MCD_CONSTANT * np.sqrt(2.0 * np.sum(diff**2, axis=1))))


def f0_metrics(a: F0Track, b: F0Track) -> tuple[float, float]:
    """(RMSE in Hz over both-voiced frames, V/UV disagreement percentage)."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} frames")
    vuv_error = 100.0 * float(np.mean(a.voiced != b.voiced)) if len(a) else 0.0
    both = a.voiced & b.voiced
    if not np.any(both):
        return 0.0, vuv_error
    fa = np.exp(a.log_f0[both])
    fb = np.exp(b.log_f0[both])
    return float(np.sqrt(np.mean((fa - fb) ** 2))), vuv_error


def band_energy(spec: Spectrogram, lo: float, hi: float) -> float:
    """Mean dB over bins whose center frequency lies in [lo, hi)."""
    n_bins = spec.magnitudes_db.shape[1]
    centers = np.arange(n_bins) * spec.bin_hz
    mask = (centers >= lo) & (centers < hi)
    if not np.any(mask) or spec.magnitudes_db.size == 0:
        raise EmptyBand(f"[{lo}, {hi}) Hz covers no bin")
    return float(np.mean(spec.magnitudes_db[:, mask]))


def spectral_flux(spec: Spectrogram, lo: float, hi: float) -> float:
    """Mean absolute frame-to-frame dB change inside a band; measures how
    strongly the band is modulated over time."""
    n_bins = spec.magnitudes_db.shape[1]
    centers = np.arange(n_bins) * spec.bin_hz
    mask = (centers >= lo) & (centers < hi)
    if not np.any(mask):
        raise EmptyBand(f"[{lo}, {hi}) Hz covers no bin")
    band = spec.magnitudes_db[:, mask]
    if len(band) < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(band, axis=0))))


def detect_spikes(wf: Waveform, window: int = 160, k: float = 8.0) -> list[int]:
    """Sample indices whose magnitude exceeds k times the local RMS.

    Neighboring detections merge into one event when closer than half the
    window; each event reports its loudest sample.  An all-zero signal
    yields no events.
    """
    if window < 16:
        raise ValueError("window must be at least 16 samples")
    x = wf.samples
    if len(x) == 0:
        return []
    kernel = np.ones(window) / window
    local_ms = np.convolve(x**2, kernel, mode="same")
    local_rms = np.sqrt(local_ms)
    mask = (local_rms > 0) & (np.abs(x) > k * local_rms)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    events = []
    group = [idx[0]]
    for i in idx[1:]:
        if i - group[-1] < window // 2:
            group.append(i)
        else:
            events.append(group)
            group = [i]
    events.append(group)
    return [int(g[np.argmax(np.abs(x[g]))]) for g in events]


def export_spectrogram(spec: Spectrogram, path) -> None:
    """Write <path>.csv (dB matrix, one frame per row) and <path>.pgm.

    The PGM maps [floor_db, max] linearly onto [0, 255] with half-up
    rounding, time left to right and frequency bottom-up.
    """
    path = str(path)
    base = path[:-4] if path.endswith((".csv", ".pgm")) else path
    write_spectrogram_csv(spec, base + ".csv")
    write_spectrogram_pgm(spec, base + ".pgm")


def write_spectrogram_csv(spec: Spectrogram, path) -> None:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            for row in spec.magnitudes_db:
                writer.writerow([np.format_float_positional(v, precision=6) for v in row])
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_spectrogram_pgm(spec: Spectrogram, path) -> None:
    mat = spec.magnitudes_db
    frames, bins = mat.shape if mat.size else (0, 0)
    if mat.size:
        top = float(mat.max())
        span = top - spec.floor_db
        if span <= 0:
            pixels = np.zeros((frames, bins), dtype=np.uint8)
        else:
            scaled = (mat - spec.floor_db) / span * 255.0
            pixels = np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)
        image = pixels.T[::-1]  # rows top-down = high frequency first
    else:
        image = np.zeros((0, 0), dtype=np.uint8)
    try:
        with open(path, "wb") as handle:
            handle.write(f"P5\n{frames} {bins}\n255\n".encode("ascii"))
            handle.write(image.tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def render_spectrogram_png(spec: Spectrogram, path, title: str | None = None) -> None:
    """Matplotlib rendering of a spectrogram for the report path."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    extent = None
    mat = spec.magnitudes_db
    if mat.size:
        seconds = len(mat) * spec.frame_shift / (spec.bin_hz * 2 * (mat.shape[1] - 1))
        extent = (0.0, seconds, 0.0, spec.bin_hz * (mat.shape[1] - 1) / 1000.0)
    ax.imshow(
        mat.T,
        origin="lower",
        aspect="auto",
        cmap="magma",
        vmin=spec.floor_db,
        vmax=mat.max() if mat.size else 0.0,
        extent=extent,
    )
    ax.set_xlabel("time / s")
    ax.set_ylabel("frequency / kHz")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)


def render_f0_comparison_png(a: F0Track, b: F0Track, sample_rate: int, path) -> None:
    """Overlaid pitch contours of two tracks, voiced frames only."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 3))
    for track, style, name in ((a, "o-", "reference"), (b, "x--", "test")):
        t = np.arange(len(track)) * track.frame_shift / sample_rate
        f0 = track.f0_hz()
        ax.plot(t, f0, style, markersize=2, linewidth=0.8, label=name)
    ax.set_xlabel("time / s")
    ax.set_ylabel("F0 / Hz")
    ax.legend(loc="best")
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)


def compare_report(
    ref_mc: MelCepstrumSequence,
    test_mc: MelCepstrumSequence,
    ref_f0: F0Track,
    test_f0: F0Track,
    test_spec: Spectrogram,
    test_wave: Waveform,
    spike_window: int = 160,
    spike_k: float = 8.0,
) -> MetricReport:
    """Bundle the standard comparison numbers into one report."""
    rmse, vuv = f0_metrics(ref_f0, test_f0)
    bands = []
    for lo, hi in (LOW_BAND_HZ, *FORMANT_BANDS_HZ):
        try:
            bands.append((lo, hi, band_energy(test_spec, lo, hi)))
        except EmptyBand:
            continue
    return MetricReport(
        mcd_db=mcd(ref_mc, test_mc),
        f0_rmse_hz=rmse,
        vuv_error_pct=vuv,
        band_energies_db=bands,
        spikes=detect_spikes(test_wave, spike_window, spike_k),
    )
