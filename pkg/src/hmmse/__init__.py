"""HMM-based parametric speech synthesis and side-information enhancement."""

from .analysis import AnalysisConfig, F0Track, MelCepstrumSequence
from .dsp import FrameConfig, Spectrogram, Waveform, read_wav, write_wav
from .enhance import EnhanceResult, InterferenceSpec, QcReport
from .labels import ContextLabel, Lexicon, PhoneLabel
from .model import HmmState, PhoneHmm, StreamGaussian, VoiceModel, load_model, save_model
from .pargen import GvTarget, StateSequence
from .vocoder import ExcitationConfig

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "ContextLabel",
    "EnhanceResult",
    "ExcitationConfig",
    "F0Track",
    "FrameConfig",
    "GvTarget",
    "HmmState",
    "InterferenceSpec",
    "Lexicon",
    "MelCepstrumSequence",
    "PhoneHmm",
    "PhoneLabel",
    "QcReport",
    "Spectrogram",
    "StateSequence",
    "StreamGaussian",
    "VoiceModel",
    "Waveform",
    "load_model",
    "read_wav",
    "save_model",
    "write_wav",
]
