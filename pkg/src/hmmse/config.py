"""Flat key=value run configuration with file and command-line layering.

Precedence is defaults, then the config file, then command-line overrides;
unknown keys are rejected and every value is validated by the module that
owns it (frame grid, analysis bounds, excitation, GV, interference).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .analysis import AnalysisConfig
from .dsp import FrameConfig
from .enhance import INTERFERENCE_KINDS
from .errors import ConfigError, NotFound
from .vocoder import PULSE_POLICIES, ExcitationConfig


@dataclass
class RunConfig:
    sample_rate: int = 16000
    frame_length: int = 400
    frame_shift: int = 80
    window: str = "hamming"
    fft_size: int = 512
    f0_min: float = 60.0
    f0_max: float = 400.0
    vuv_threshold: float = 0.3
    order: int = 24
    alpha: float = 0.42
    highpass_hz: float = 70.0
    seed: int = 0
    noise_gain: float = 1.0
    pulse_gain: str = "unit_energy_per_period"
    gv_weight: float = 0.7
    gv_iterations: int = 20
    gv_step: float = 0.1
    iterations: int = 10
    min_occupancy: float = 50.0
    context_width: str = "quinphone"
    rate: float = 1.0
    interference: str = "additive_noise"
    snr_db: float = 0.0
    rt60: float = 0.3
    spike_window: int = 160
    spike_k: float = 8.0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.frame_config()
            self.analysis_config()
            self.excitation_config()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from None
        if self.context_width not in ("triphone", "quinphone"):
            raise ConfigError(f"context_width: unknown value {self.context_width!r}")
        if self.interference not in INTERFERENCE_KINDS:
            raise ConfigError(f"interference: unknown kind {self.interference!r}")
        if self.pulse_gain not in PULSE_POLICIES:
            raise ConfigError(f"pulse_gain: unknown policy {self.pulse_gain!r}")
        if not 0 <= self.gv_weight <= 1:
            raise ConfigError("gv_weight must lie in [0, 1]")
        if self.gv_iterations < 0 or self.gv_step <= 0:
            raise ConfigError("gv_iterations must be >= 0 and gv_step > 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.min_occupancy < 0:
            raise ConfigError("min_occupancy must be >= 0")
        if self.rate <= 0:
            raise ConfigError("rate must be > 0")
        if self.rt60 <= 0:
            raise ConfigError("rt60 must be > 0")
        if self.highpass_hz < 0 or self.highpass_hz >= self.sample_rate / 2:
            raise ConfigError("highpass_hz must lie in [0, Nyquist)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.frame_length, self.frame_shift, self.window)

    def analysis_config(self) -> AnalysisConfig:
        return AnalysisConfig(
            f0_min=self.f0_min,
            f0_max=self.f0_max,
            vuv_threshold=self.vuv_threshold,
            order=self.order,
            alpha=self.alpha,
            fft_size=self.fft_size,
            frame=self.frame_config(),
        )

    def excitation_config(self) -> ExcitationConfig:
        return ExcitationConfig(self.seed, self.noise_gain, self.pulse_gain)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def parse_assignments(pairs) -> dict:
    """key=value strings (from --set flags) into a validated dict."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults <- file <- overrides; later layers win."""
    values = {}
    if path is not None:
        try:
            text = open(path, encoding="utf-8").read()
        except FileNotFoundError:
            raise NotFound(str(path)) from None
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{number}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value if not isinstance(value, str) else _coerce(key, value)
    return RunConfig(**values)
