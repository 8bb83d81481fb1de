"""Source-filter synthesis: excitation generation and the MLSA filter.

The excitation is a pulse train on voiced frames and seeded white noise on
unvoiced frames.  The synthesis filter realizes exp(sum of warped cepstral
terms) with a two-stage Pade(5) approximation of the exponential; the log
gain coefficient bypasses the approximation and is applied exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .analysis import AnalysisConfig, F0Track, MelCepstrumSequence, estimate_f0, mgc_analysis
from .dsp import Waveform
from .errors import LengthMismatch, UnstableCoefficients

# Stability-optimized Pade(5) coefficients for exp(x), |x| <~ 6.
PADE5 = np.array(
    [1.0, 0.4999391, 0.1107098, 0.01369984, 0.0009564853, 0.00003041721]
)

STATE_GUARD = 1e6

PULSE_POLICIES = ("unit_energy_per_period", "unit_amplitude")


@dataclass
class ExcitationConfig:
    seed: int = 0
    noise_gain: float = 1.0
    pulse_gain: str = "unit_energy_per_period"

    def __post_init__(self):
        if self.noise_gain < 0:
            raise ValueError("noise_gain must be >= 0")
        if self.pulse_gain not in PULSE_POLICIES:
            raise ValueError(f"unknown pulse_gain policy {self.pulse_gain!r}")


def make_excitation(f0: F0Track, sample_rate: int, cfg: ExcitationConfig) -> Waveform:
    """Pulse-train / noise excitation for one utterance.

    Voiced stretches place impulses with a running phase accumulator whose
    instantaneous period follows the pitch track (log-F0 linearly
    interpolated between frame centers inside each voiced run).  Unvoiced
    stretches get white noise from the seeded generator.  Bit-deterministic
    for a fixed seed.
    """
    shift = f0.frame_shift
    n = len(f0) * shift
    out = np.zeros(n)
    if n == 0:
        return Waveform(out, sample_rate)

    voiced_per_sample = np.repeat(f0.voiced, shift)

    # per-sample log-f0, interpolated between frame centers within voiced runs
    if np.any(f0.voiced):
        centers = (np.arange(len(f0)) + 0.5) * shift - 0.5
        sample_pos = np.arange(n, dtype=np.float64)
        log_f0 = np.zeros(n)
        t = 0
        while t < len(f0):
            if not f0.voiced[t]:
                t += 1
                continue
            start = t
            while t < len(f0) and f0.voiced[t]:
                t += 1
            lo, hi = start * shift, t * shift
            log_f0[lo:hi] = np.interp(
                sample_pos[lo:hi], centers[start:t], f0.log_f0[start:t]
            )
        period = sample_rate / np.exp(log_f0)

        unit_energy = cfg.pulse_gain == "unit_energy_per_period"
        phase = 0.0
        prev_voiced = False
        for i in range(n):
            if voiced_per_sample[i]:
                if not prev_voiced:
                    phase = 1.0  # pulse at voiced-run onset
                phase += 1.0 / period[i]
                if phase >= 1.0:
                    phase -= 1.0
                    out[i] = np.sqrt(period[i]) if unit_energy else 1.0
            prev_voiced = voiced_per_sample[i]

    unvoiced_idx = np.flatnonzero(~voiced_per_sample)
    if len(unvoiced_idx) and cfg.noise_gain > 0:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        out[unvoiced_idx] = cfg.noise_gain * rng.standard_normal(len(unvoiced_idx))

    return Waveform(out, sample_rate)


def mc_to_b(frames: np.ndarray, alpha: float) -> np.ndarray:
    """Mel-cepstra -> MLSA filter coefficients via the alpha recursion."""
    b = np.array(frames, dtype=np.float64, copy=True)
    for m in range(b.shape[1] - 2, -1, -1):
        b[:, m] -= alpha * b[:, m + 1]
    return b


@njit(cache=True)
def _mlsa_run(excitation, b_frames, alpha, shift, pade, guard):  # pragma: no cover
    n = excitation.shape[0]
    n_frames = b_frames.shape[0]
    order = b_frames.shape[1] - 1
    y = np.zeros(n)

    aa = 1.0 - alpha * alpha
    # stage 1: Pade chain taps + one-pole states
    t1 = np.zeros(6)
    g1 = np.zeros(6)
    # stage 2: Pade chain taps + warped delay line per tap
    t2 = np.zeros(6)
    d2 = np.zeros((6, order + 2))
    b_now = np.zeros(order + 1)

    for i in range(n):
        # linear interpolation of coefficients between frame centers
        pos = (i + 0.5) / shift - 0.5
        if pos <= 0.0 or n_frames == 1:
            for m in range(order + 1):
                b_now[m] = b_frames[0, m]
        elif pos >= n_frames - 1:
            for m in range(order + 1):
                b_now[m] = b_frames[n_frames - 1, m]
        else:
            k = int(pos)
            w = pos - k
            for m in range(order + 1):
                b_now[m] = (1.0 - w) * b_frames[k, m] + w * b_frames[k + 1, m]

        x = excitation[i] * np.exp(b_now[0])

        # ---- stage 1: exp(b1 * one-pole warped delay) --------------------
        acc = x
        out1 = 0.0
        for p in range(5, 0, -1):
            g1[p] = aa * t1[p - 1] + alpha * g1[p]
            tap = b_now[1] * g1[p]
            t1[p] = tap
            v = pade[p] * tap
            if p & 1:
                acc += v
            else:
                acc -= v
            out1 += v
        t1[0] = acc
        out1 += acc
        if abs(acc) > guard or abs(out1) > guard:
            return y, i

        # ---- stage 2: exp(sum_{m>=2} b_m * warped delay chain) ------------
        acc = out1
        out2 = 0.0
        for p in range(5, 0, -1):
            d = d2[p]
            u = t2[p - 1]
            d[0] = u
            d[1] = aa * d[0] + alpha * d[1]
            tap = 0.0
            for m in range(2, order + 1):
                d[m] = d[m] + alpha * (d[m + 1] - d[m - 1])
                tap += b_now[m] * d[m]
            for m in range(order + 1, 1, -1):
                d[m] = d[m - 1]
            t2[p] = tap
            v = pade[p] * tap
            if p & 1:
                acc += v
            else:
                acc -= v
            out2 += v
        t2[0] = acc
        out2 += acc
        if abs(acc) > guard or abs(out2) > guard:
            return y, i

        y[i] = out2

    return y, -1


def mlsa_filter(mc: MelCepstrumSequence, excitation: Waveform) -> Waveform:
    """Filter an excitation with per-frame mel-cepstra.

    Coefficients are interpolated sample-by-sample between frame centers.
    Raises UnstableCoefficients as soon as the internal filter state passes
    the guard threshold, before any non-finite value can reach the output.
    """
    expected = len(mc) * mc.frame_shift
    if len(excitation.samples) != expected:
        raise LengthMismatch(
            f"excitation has {len(excitation.samples)} samples, expected {expected}"
        )
    if len(mc) == 0:
        return Waveform(np.zeros(0), excitation.sample_rate)
    b = mc_to_b(mc.frames, mc.alpha)
    y, bad = _mlsa_run(
        excitation.samples, b, mc.alpha, mc.frame_shift, PADE5, STATE_GUARD
    )
    if bad >= 0:
        raise UnstableCoefficients(
            f"filter state exceeded {STATE_GUARD:g} at sample {bad}"
        )
    return Waveform(y, excitation.sample_rate)


def resynthesize(wf: Waveform, cfg: AnalysisConfig, ex_cfg: ExcitationConfig) -> Waveform:
    """Analysis-synthesis loop: extract (F0, mel-cepstra), rebuild the wave."""
    f0 = estimate_f0(wf, cfg)
    mc = mgc_analysis(wf, cfg)
    excitation = make_excitation(f0, wf.sample_rate, ex_cfg)
    return mlsa_filter(mc, excitation)
