"""Resynthesis-based enhancement pipeline and corpus quality control.

The pipeline has four stages: (1) oracle resynthesis from the clean
signal's own parameters, (2) controlled interference (noise,
reverberation, competing speaker), (3) plain synthesis from text through
a voice model, and (4) the enhancement path proper: model-generated
spectra aligned to the utterance, driven by the original signal's pitch
track as side information.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .align import viterbi_align
from .analysis import (
    AnalysisConfig,
    F0Track,
    MelCepstrumSequence,
    estimate_f0,
    mgc_analysis,
)
from .dsp import FrameConfig, Waveform, frame_signal, read_wav
from .errors import (
    FrameCountMismatch,
    HmmseError,
    IoError,
    LengthMismatch,
    MissingCompetingSignal,
    SilentSignal,
)
from .hmm import _Chain, make_observation
from .labels import expand_context, parse_label_file, text_to_phonemes
from .model import VoiceModel
from .pargen import GvTarget, StateSequence, generate_parameters, predict_durations
from .vocoder import ExcitationConfig, make_excitation, mlsa_filter

INTERFERENCE_KINDS = ("additive_noise", "reverberation", "competing_speaker")


@dataclass
class InterferenceSpec:
    kind: str
    snr_db: float = 0.0
    rt60_seconds: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INTERFERENCE_KINDS:
            raise ValueError(f"unknown interference kind {self.kind!r}")
        if self.kind == "reverberation" and self.rt60_seconds <= 0:
            raise ValueError("rt60 must be positive")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass
class EnhanceResult:
    waveform: Waveform
    alignment_log_likelihood: float
    observed_frames: int
    side_frames: int


def oracle_components(clean: Waveform, cfg: AnalysisConfig):
    """The ideal side information: pitch track and cepstra of the clean signal."""
    return estimate_f0(clean, cfg), mgc_analysis(clean, cfg)


def make_rir(rt60_seconds: float, sample_rate: int, seed: int) -> np.ndarray:
    """Exponentially decaying seeded-noise room impulse response.

    Energy decays 60 dB over rt60; length covers 1.2 * rt60."""
    n = max(8, int(np.ceil(1.2 * rt60_seconds * sample_rate)))
    rng = np.random.Generator(np.random.PCG64(seed))
    t = np.arange(n) / sample_rate
    decay = np.exp(-(3.0 * np.log(10.0) / rt60_seconds) * t)
    rir = rng.standard_normal(n) * decay
    rir[0] = 1.0  # direct path
    return rir


def add_interference(
    clean: Waveform, spec: InterferenceSpec, competing: Waveform | None = None
) -> Waveform:
    """Degrade a clean signal; the degradation is seeded and exact.

    additive_noise and competing_speaker are mixed at exactly the requested
    SNR; reverberation convolves with a seeded RIR, truncates to the input
    length and renormalizes the peak to the clean signal's.
    """
    x = clean.samples
    power = float(np.mean(x**2))
    if power == 0.0:
        raise SilentSignal("cannot set an SNR against a silent signal")

    if spec.kind == "additive_noise":
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        noise = rng.standard_normal(len(x))
        scale = np.sqrt(power / np.mean(noise**2) * 10.0 ** (-spec.snr_db / 10.0))
        return Waveform(x + scale * noise, clean.sample_rate)

    if spec.kind == "reverberation":
        rir = make_rir(spec.rt60_seconds, clean.sample_rate, spec.seed)
        wet = fftconvolve(x, rir)[: len(x)]
        peak = np.max(np.abs(wet))
        if peak > 0:
            wet = wet * (np.max(np.abs(x)) / peak)
        return Waveform(wet, clean.sample_rate)

    if competing is None:
        raise MissingCompetingSignal("competing_speaker needs a second waveform")
    other = competing.samples
    if len(other) == 0:
        raise LengthMismatch("competing signal is empty")
    if len(other) < len(x):
        other = np.concatenate([other, np.zeros(len(x) - len(other))])
    other = other[: len(x)]
    other_power = float(np.mean(other**2))
    if other_power == 0.0:
        raise LengthMismatch("competing signal has no audible content")
    scale = np.sqrt(power / other_power * 10.0 ** (-spec.snr_db / 10.0))
    return Waveform(x + scale * other, clean.sample_rate)


def synthesize_from_text(
    model: VoiceModel,
    text: str,
    lexicon,
    gv: GvTarget | None,
    ex_cfg: ExcitationConfig,
    rate: float = 1.0,
) -> Waveform:
    """Plain text-to-speech through the voice model."""
    phones = text_to_phonemes(text, lexicon)
    contexts = expand_context(phones, model.metadata.get("context_width", "quinphone"))
    seq = predict_durations(model, contexts, rate)
    mc, f0 = generate_parameters(model, seq, gv)
    sample_rate = int(model.metadata.get("sample_rate", 16000))
    excitation = make_excitation(f0, sample_rate, ex_cfg)
    return mlsa_filter(mc, excitation)


def enhance_with_side_info(
    model: VoiceModel,
    labels,
    observed: Waveform,
    side_f0: F0Track,
    gv: GvTarget | None,
    ex_cfg: ExcitationConfig,
    cfg: AnalysisConfig | None = None,
) -> EnhanceResult:
    """The enhancement path: model spectra on aligned durations, original pitch.

    Features of the observed signal pin the state durations through forced
    alignment; generation then runs on exactly those durations and the
    excitation comes from the side-information pitch track, so the output
    always spans len(side_f0) * frame_shift samples.
    """
    cfg = cfg or AnalysisConfig()
    obs_f0 = estimate_f0(observed, cfg)
    obs_mc = mgc_analysis(observed, cfg)
    features = make_observation(obs_f0, obs_mc)
    if abs(len(features) - len(side_f0)) > 1:
        raise FrameCountMismatch(
            f"observed {len(features)} frames vs side information {len(side_f0)}"
        )

    contexts = expand_context(labels, model.metadata.get("context_width", "quinphone"))
    result = viterbi_align(model, contexts, features)
    chain = _Chain(model, contexts)
    states = [hmm.states[s] for hmm, s in chain.positions]
    seq = StateSequence(states, result.state_durations)
    mc, _ = generate_parameters(model, seq, gv)

    frames = mc.frames
    if len(frames) > len(side_f0):
        frames = frames[: len(side_f0)]
    elif len(frames) < len(side_f0):
        pad = np.repeat(frames[-1:], len(side_f0) - len(frames), axis=0)
        frames = np.vstack([frames, pad])
    mc = MelCepstrumSequence(mc.order, mc.alpha, mc.frame_shift, frames)

    excitation = make_excitation(side_f0, observed.sample_rate, ex_cfg)
    out = mlsa_filter(mc, excitation)
    return EnhanceResult(out, result.log_likelihood, len(features), len(side_f0))


# ---------------------------------------------------------------------------
# corpus quality control

QC_FINDING_KINDS = (
    "missing_audio",
    "missing_label",
    "empty_label",
    "duration_mismatch",
    "clipping",
    "inaudible",
    "low_snr",
)

CLIP_FRACTION = 0.001
INAUDIBLE_DBFS = -45.0
LOW_SNR_DB = 15.0
DURATION_TOLERANCE = 0.20


@dataclass
class QcFinding:
    kind: str
    measurements: dict = field(default_factory=dict)


@dataclass
class QcReport:
    findings: dict  # stem -> list[QcFinding]

    def flawed(self) -> dict:
        return {stem: f for stem, f in self.findings.items() if f}

    def to_dict(self) -> dict:
        return {
            stem: [{"kind": f.kind, **f.measurements} for f in findings]
            for stem, findings in sorted(self.findings.items())
        }


def _frame_snr_db(wf: Waveform, cfg: FrameConfig) -> float:
    """Energy-percentile SNR: quietest 5 % of frames stand in for the noise
    floor, the loudest 20 % for speech."""
    frames = frame_signal(wf, FrameConfig(cfg.frame_length, cfg.frame_shift, "rectangular"))
    if len(frames) < 20:
        return np.inf
    powers = np.sort(np.mean(frames**2, axis=1))
    lo = max(1, len(powers) // 20)
    hi = max(1, len(powers) // 5)
    noise = max(float(np.mean(powers[:lo])), 1e-12)
    speech = max(float(np.mean(powers[-hi:])), 1e-12)
    return 10.0 * np.log10(speech / noise)


def validate_corpus(audio_dir, label_dir, cfg: AnalysisConfig | None = None) -> QcReport:
    """Pair audio and label files by stem and flag the classic corpus flaws.

    Unreadable audio counts as missing_audio and unparseable label files as
    empty_label, each with the underlying error recorded.
    """
    cfg = cfg or AnalysisConfig()
    audio_dir, label_dir = Path(audio_dir), Path(label_dir)
    if not audio_dir.is_dir():
        raise IoError(f"not a directory: {audio_dir}")
    if not label_dir.is_dir():
        raise IoError(f"not a directory: {label_dir}")
    audio = {p.stem: p for p in sorted(audio_dir.glob("*.wav"))}
    labels = {p.stem: p for p in sorted(label_dir.glob("*.lab"))}

    findings: dict = {}
    for stem in sorted(set(audio) | set(labels)):
        found = []
        wf = None
        if stem not in audio:
            found.append(QcFinding("missing_audio"))
        else:
            try:
                wf = read_wav(audio[stem])
            except HmmseError as exc:
                found.append(QcFinding("missing_audio", {"error": str(exc)}))

        parsed = None
        if stem not in labels:
            found.append(QcFinding("missing_label"))
        else:
            if os.path.getsize(labels[stem]) == 0:
                found.append(QcFinding("empty_label"))
            else:
                try:
                    parsed = parse_label_file(labels[stem])
                except HmmseError as exc:
                    found.append(QcFinding("empty_label", {"error": str(exc)}))

        if wf is not None and len(wf.samples):
            n = len(wf.samples)
            clipped = int(np.count_nonzero(np.abs(wf.samples) >= 32767 / 32768))
            if clipped / n > CLIP_FRACTION:
                found.append(
                    QcFinding("clipping", {"fraction": clipped / n})
                )
            rms = float(np.sqrt(np.mean(wf.samples**2)))
            rms_db = 20.0 * np.log10(max(rms, 1e-12))
            if rms_db < INAUDIBLE_DBFS:
                found.append(QcFinding("inaudible", {"rms_dbfs": rms_db}))
            else:
                snr = _frame_snr_db(wf, cfg.frame)
                if snr < LOW_SNR_DB:
                    found.append(QcFinding("low_snr", {"snr_db": snr}))

            if parsed is not None and parsed[0].timed:
                label_seconds = (parsed[-1].end - parsed[0].start) / 1e7
                audio_seconds = wf.duration_seconds
                deviation = abs(label_seconds - audio_seconds) / max(audio_seconds, 1e-9)
                if deviation > DURATION_TOLERANCE:
                    found.append(
                        QcFinding(
                            "duration_mismatch",
                            {
                                "label_seconds": label_seconds,
                                "audio_seconds": audio_seconds,
                            },
                        )
                    )
        findings[stem] = found
    return QcReport(findings)
